#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ddl/config.hpp"
#include "ddl/data_io.hpp"
#include "ddl/model.hpp"

namespace ddl::trainer {

// Adam accumulators, one moment pair per parameter in registry order.
struct OptimState {
    std::vector<Matrix> m1;
    std::vector<Matrix> m2;
    std::int64_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
};

OptimState init_optim(model::ModelParams& params);

// base_lr * 0.5 * (1 + cos(pi * epoch / total_epochs)), decayed per epoch.
double cosine_lr(int epoch, double base_lr, int total_epochs);

// Bias-corrected Adam over the whole registry. Scans every gradient first
// and rejects the step without touching any state if one is non-finite,
// naming the offending parameter.
void adam_step(const std::vector<std::pair<std::string, Matrix*>>& params,
               const std::vector<Matrix>& grads, OptimState& state, double lr);

struct EpochMetrics {
    double total = 0.0;
    double mil = 0.0;
    double dr = 0.0;
    double da = 0.0;
    int steps = 0;     // accepted optimizer steps
    int rejected = 0;  // steps dropped by the non-finite guard
};

// One pass over the data: each step draws batch/2 positive and batch/2
// negative bags (shuffled per epoch, cycling the smaller class), subsamples
// to t_max, and applies one Adam update of the full objective. Returns the
// per-component loss means over accepted steps.
EpochMetrics train_epoch(model::ModelParams& params, OptimState& state,
                         const std::vector<data_io::FeatureBag>& bags,
                         const config::TrainConfig& tc, int epoch);

struct AuditRow {
    std::string name;
    double max_rel_err = 0.0;
    double analytic = 0.0;  // gradient at the worst entry
    double numeric = 0.0;   // central difference at the worst entry
};

struct AuditReport {
    std::vector<AuditRow> rows;  // one per parameter, registry order
    double max_rel_err = 0.0;
    std::string worst;
    bool pass = false;
};

// Compares the tape's gradients of the full objective on one positive and
// one negative bag against central finite differences (step 1e-5) for every
// parameter entry. tamper_name/tamper_delta inject a fault into the named
// parameter's analytic gradient so tests can prove the audit catches it.
AuditReport grad_audit(model::ModelParams& params, const data_io::FeatureBag& pos,
                       const data_io::FeatureBag& neg, double tolerance,
                       const std::string& tamper_name = "", double tamper_delta = 0.0);

// Versioned binary container: magic "DDLC", u32 version, hyperparameter
// JSON block, named parameters, Adam moments, step counter. Bit-exact
// round-trip.
void save_checkpoint(const std::string& path, model::ModelParams& params,
                     const OptimState& state);

struct Checkpoint {
    model::ModelParams params;
    OptimState state;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace ddl::trainer
