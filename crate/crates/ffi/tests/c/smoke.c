#include <stdio.h>
#include "pkm.h"

int main(void) {
    double points[] = {0.0, 0.0, 0.1, 0.0, 0.0, 0.1, 5.0, 5.0, 5.1, 5.0, 5.0, 5.1};
    size_t truth[] = {0, 0, 0, 1, 1, 1};
    PkmDataset *ds = NULL;
    if (pkm_dataset_new(points, 6, 2, truth, &ds) != PKM_STATUS_OK) {
        fprintf(stderr, "%s\n", pkm_last_error_message());
        return 1;
    }
    PkmOptions opts = pkm_options_default();
    opts.method = PKM_METHOD_MSAGP;
    PkmResult *r = NULL;
    if (pkm_solve(ds, 2, &opts, &r) != PKM_STATUS_OK) {
        fprintf(stderr, "%s\n", pkm_last_error_message());
        return 1;
    }
    size_t labels[6];
    double nmi = 0.0;
    if (pkm_result_labels(r, labels, 6) != PKM_STATUS_OK) return 1;
    if (pkm_nmi(truth, labels, 6, &nmi) != PKM_STATUS_OK) return 1;
    if (pkm_result_labels(r, labels, 2) != PKM_STATUS_BUFFER_TOO_SMALL) return 1;
    printf("%.6f %.6f\n", pkm_result_objective(r), nmi);
    pkm_result_free(r);
    pkm_dataset_free(ds);
    return 0;
}
