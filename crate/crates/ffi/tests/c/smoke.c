#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include "qfm.h"

#define CHECK(call)                                                          \
    do {                                                                     \
        QfmStatus s_ = (call);                                               \
        if (s_ != QFM_STATUS_OK) {                                           \
            fprintf(stderr, "%s -> %d: %s\n", #call, (int)s_,                \
                    qfm_last_error() ? qfm_last_error() : "?");              \
            return 1;                                                        \
        }                                                                    \
    } while (0)

int main(void) {
    QfmEncoding *enc = NULL;
    CHECK(qfm_encoding_new(QFM_STRATEGY_PAULI, 3, 1, &enc));

    size_t len = 0;
    CHECK(qfm_encoding_spectrum(enc, NULL, NULL, 0, &len));
    double *omega = malloc(len * sizeof(double));
    uint64_t *red = malloc(len * sizeof(uint64_t));
    CHECK(qfm_encoding_spectrum(enc, omega, red, len, &len));
    for (size_t i = 0; i < len; i++) printf("spectrum %g %llu\n", omega[i], (unsigned long long)red[i]);

    QfmModel *model = NULL;
    CHECK(qfm_model_new(enc, QFM_ANSATZ_STRONGLY_ENTANGLING, 2, QFM_OBSERVABLE_GLOBAL, &model));
    CHECK(qfm_model_randomize(model, 11));
    double f = 0.0;
    CHECK(qfm_model_evaluate(model, 0.3, &f));
    printf("f %.17g\n", f);

    size_t nc = 0;
    CHECK(qfm_model_coefficients(model, NULL, NULL, NULL, 0, &nc));
    double *w = malloc(nc * sizeof(double)), *re = malloc(nc * sizeof(double)), *im = malloc(nc * sizeof(double));
    CHECK(qfm_model_coefficients(model, w, re, im, nc, &nc));
    double series = 0.0;
    for (size_t i = 0; i < nc; i++) series += re[i] * cos(w[i] * 0.3) - im[i] * sin(w[i] * 0.3);
    printf("series %.17g\n", series);

    QfmStatus bad = qfm_encoding_new(QFM_STRATEGY_GOLOMB, 2, 2, &enc);
    printf("golomb L=2 status %d error %s\n", (int)bad, qfm_last_error());

    free(omega); free(red); free(w); free(re); free(im);
    qfm_model_free(model);
    qfm_encoding_free(enc);
    printf("version %s\n", qfm_version());
    return 0;
}
