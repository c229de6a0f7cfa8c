#include <math.h>
#include <stdio.h>
#include <string.h>

#include "sci.h"

#define CHECK(call)                                                        \
    do {                                                                   \
        SciStatus s_ = (call);                                             \
        if (s_ != SCI_STATUS_OK) {                                         \
            fprintf(stderr, "%s -> %d: %s\n", #call, s_, sci_last_error()); \
            return 1;                                                      \
        }                                                                  \
    } while (0)

int main(void) {
    enum { NX = 16, NY = 16, NT = 4 };
    static double truth[NX * NY * NT];
    for (size_t k = 0; k < NT; k++)
        for (size_t j = 0; j < NY; j++)
            for (size_t i = 0; i < NX; i++) {
                int inside = i >= 3 + k && i < 9 + k && j >= 4 && j < 10;
                truth[k * NX * NY + j * NX + i] = inside ? 0.9 : 0.1;
            }

    SciCube *x = NULL, *lsq = NULL, *gap = NULL;
    SciMasks *masks = NULL;
    SciOperator *op = NULL;
    SciMeasurement *y = NULL;
    CHECK(sci_cube_new(NX, NY, NT, truth, &x));
    CHECK(sci_masks_generate(SCI_MASK_KIND_COVERED_BERNOULLI, 0.5, NX, NY, NT, 7, &masks));
    CHECK(sci_operator_new(masks, false, 0, 0, &op));
    CHECK(sci_forward(op, x, 0.0, 0, &y));

    size_t rows = 0, cols = 0;
    CHECK(sci_operator_measurement_dims(op, &rows, &cols));
    if (rows != NX || cols != NY) return 2;

    CHECK(sci_reconstruct(op, y, "lsq", 0, -1.0, NULL, &lsq));
    CHECK(sci_reconstruct(op, y, "gap-tv", 0, -1.0, NULL, &gap));
    double p_lsq = 0, p_gap = 0;
    CHECK(sci_psnr(x, lsq, &p_lsq));
    CHECK(sci_psnr(x, gap, &p_gap));
    printf("lsq %.3f gap %.3f\n", p_lsq, p_gap);
    if (!(p_gap > p_lsq)) return 3;

    SciCube *none = NULL;
    if (sci_reconstruct(op, y, "no-such", 0, -1.0, NULL, &none) != SCI_STATUS_INVALID_ARGUMENT) return 4;
    if (strstr(sci_last_error(), "gap-tv") == NULL) return 5;
    if (sci_cube_dims(NULL, &rows, &cols, &rows) != SCI_STATUS_NULL_POINTER) return 6;

    SciTheoryReport rep;
    CHECK(sci_theorem_check(8, 8, 2, 2, 20, 1.0, 1, true, &rep));
    if (!rep.pass || rep.successes != 20) return 7;

    sci_cube_free(x);
    sci_cube_free(lsq);
    sci_cube_free(gap);
    sci_cube_free(NULL);
    sci_masks_free(masks);
    sci_operator_free(op);
    sci_measurement_free(y);
    return 0;
}
