#include "mps.h"

int main(void) {
    MpsConfigC cfg;
    if (mps_config_default(&cfg) != MPS_STATUS_OK) return 1;
    cfg.train_n = 4;
    cfg.tau = 2;
    cfg.replicates = 20;

    MpsLossMatrix *lm = NULL;
    if (mps_loss_matrix_new(2, &lm) != MPS_STATUS_OK) return 2;
    for (int t = 0; t < 4; t++) {
        double row[2] = {0.1 * t, 1.0 - 0.1 * t};
        mps_loss_matrix_push_row(lm, row, 2);
    }
    MpsEngine *engine = NULL;
    if (mps_engine_new(lm, &cfg, &engine) != MPS_STATUS_OK) return 3;
    double next[2] = {0.5, 0.25};
    MpsStep step;
    size_t set[2];
    if (mps_engine_step(engine, next, 2, &step, set, 2) != MPS_STATUS_OK) return 4;
    if (step.t != 5 || step.cardinality < 1) return 5;
    mps_engine_free(engine);
    mps_loss_matrix_free(lm);
    return 0;
}
