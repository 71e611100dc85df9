#include <stdio.h>
#include "daps.h"

int main(void) {
    DapsConfig *cfg = NULL;
    DapsRun *run = NULL;
    double x[2];
    double w2 = -1.0;
    if (daps_config_from_preset("appendix_e_daps", &cfg) != DAPS_STATUS_OK) {
        fprintf(stderr, "%s\n", daps_last_error());
        return 1;
    }
    daps_config_set_chains(cfg, 2);
    daps_config_set(cfg, "n_anneal", 5.0);
    daps_config_set(cfg, "resolution", 50.0);
    if (daps_run(cfg, 1, &run) != DAPS_STATUS_OK) {
        fprintf(stderr, "%s\n", daps_last_error());
        return 1;
    }
    daps_run_sample(run, 0, x, 2);
    daps_run_metric(run, "w2_oracle", &w2);
    printf("%zu %g %g %g\n", daps_run_chain_count(run), x[0], x[1], w2);
    daps_run_free(run);
    daps_config_free(cfg);
    return 0;
}
