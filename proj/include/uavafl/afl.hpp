#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "uavafl/aircomp.hpp"
#include "uavafl/scenario.hpp"
#include "uavafl/task.hpp"

namespace uavafl {

// Constants of Assumptions 1-5 plus the learning rate and staleness cap.
struct BoundParams {
    double mu = 0.2;
    double lipschitz = 10.0;
    double delta = 20.0;
    double alpha1 = 100.0;
    double alpha2 = 0.1;
    int staleness_bound = 50;    // S
    double learning_rate = 0.1;  // lambda, 1/L by default

    static BoundParams paper_defaults() { return {}; }
};

// Decision variables over one horizon: trajectory q(0..K), selection A,
// amplitude gains B and the audit record of denoising factors Z.
struct Schedule {
    Trajectory trajectory;
    std::vector<std::vector<std::uint8_t>> selection;  // M x K
    std::vector<std::vector<double>> amplitudes;       // M x K
    std::vector<double> zeta;                          // K

    int slot_count() const { return selection.empty() ? 0 : static_cast<int>(selection[0].size()); }
    int device_count() const { return static_cast<int>(selection.size()); }
    std::vector<int> selected_at(int slot_index) const;  // 0-based column
};

struct ErrorBreakdown {
    std::vector<double> asynchrony;  // e_a
    std::vector<double> selection;   // e_d
    std::vector<double> comm;        // e_c
    std::vector<double> total;       // e = e_a + e_d + e_c
};

struct SlotOutcome {
    AggregationResult agg;
    ErrorBreakdown errors;
    double nmse_db = 0.0;
    bool updated = false;
};

struct HistoryRow {
    int slot = 0;  // k
    double loss = 0.0;
    double gap = 0.0;
    double test_accuracy = 0.0;
    double nmse_db = 0.0;
    int max_staleness = 0;
    int n_selected = 0;
};

// Per-slot internals kept when auditing error bounds.
struct SlotAudit {
    int slot = 0;
    int n_selected = 0;
    double ea_sq = 0.0;
    double ed_sq = 0.0;
    double ec_sq = 0.0;
    double e_sq = 0.0;
    double grad_norm_sq = 0.0;  // ||grad F(x(k))||^2
    double decomposition_residual = 0.0;
    double update_residual = 0.0;
    double zeta = 0.0;
    double analytic_mse = 0.0;
    std::vector<std::complex<double>> delta_signal;  // sum_m Delta_m r_m
};

struct TrainingHistory {
    std::vector<HistoryRow> rows;  // slots 1..K and a final row at K+1
    std::vector<double> final_model;
    double final_loss = 0.0;
    double final_gap = 0.0;
    int max_staleness = 0;
    double mean_nmse_db = 0.0;  // over slots with a transmission
    std::vector<SlotAudit> audit;
    std::vector<std::vector<double>> model_path;  // x(1..K+1) when recorded
};

struct RunOptions {
    BoundParams params;
    std::uint64_t seed = 0;
    bool error_free = false;
    bool enforce_staleness = true;  // precheck windows of the schedule
    bool record_audit = false;
    bool record_models = false;
    std::vector<double> initial_model;  // defaults to zeros
};

// Slot-sequential Algorithm-1 engine. Each slot: transmit over the air,
// update the model, broadcast to the selected devices and mark them busy.
// Strategies with deferred updates drive transmit()/apply_update() directly.
class TrainingEngine {
public:
    TrainingEngine(const Scenario& scenario, const LearningTask& task, const RunOptions& options);

    int current_slot() const { return slot_; }
    const std::vector<double>& model() const { return model_; }
    bool ready(int device) const;
    int staleness(int device) const { return slot_ - last_selected_[device]; }
    int max_staleness_seen() const { return max_staleness_; }
    const std::vector<double>& cached_gradient(int device) const { return cached_[device]; }
    int basis_slot(int device) const { return basis_slot_[device]; }
    const LearningTask& task() const { return *task_; }

    SlotOutcome step(const std::vector<int>& selected, Vec3 uav_position,
                     const std::vector<double>& amplitudes);
    AggregationResult transmit(const std::vector<int>& selected, Vec3 uav_position,
                               const std::vector<double>& amplitudes);
    void apply_update(const std::vector<double>& aggregated, const std::vector<int>& broadcast_to);
    void advance_slot();

private:
    void require_ready(const std::vector<int>& selected) const;
    void scan_staleness();  // records tau of the current slot, pre-selection
    ErrorBreakdown decompose(const std::vector<int>& selected,
                             const AggregationResult& agg) const;

    const Scenario* scenario_;
    const LearningTask* task_;
    RunOptions options_;
    ChannelModel channels_;
    std::uint64_t noise_seed_;
    std::vector<double> model_;
    std::vector<std::vector<double>> cached_;  // per-device gradient
    std::vector<int> last_selected_;           // 0 = bootstrap
    std::vector<int> busy_until_;
    std::vector<int> basis_slot_;
    int slot_ = 1;
    int scanned_slot_ = 0;
    int max_staleness_ = 0;
};

// Validates A against the staleness windows (every length-S window holds a
// selection per device) and the busy spacing implied by compute times.
std::optional<std::string> check_schedule(const Scenario& scenario, const Schedule& schedule,
                                          int staleness_bound, bool check_staleness = true);

TrainingHistory run_training(const Scenario& scenario, const Schedule& schedule,
                             const LearningTask& task, const RunOptions& options);

// Monte-Carlo repetitions over noise seeds; trial t derives its stream from
// hash(seed, t), results reduce in index order, so the OpenMP kernel matches
// the serial reference bit for bit.
std::vector<TrainingHistory> run_trials_serial(const Scenario& scenario, const Schedule& schedule,
                                               const LearningTask& task, const RunOptions& options,
                                               int trials, std::uint64_t seed);
std::vector<TrainingHistory> run_trials(const Scenario& scenario, const Schedule& schedule,
                                        const LearningTask& task, const RunOptions& options,
                                        int trials, std::uint64_t seed);

struct AssumptionEstimates {
    double delta = 0.0;
    double alpha1 = 0.0;
    double alpha2 = 0.0;
    double mu = 0.0;
    double lipschitz = 0.0;
    double worst_alpha_ratio = 0.0;  // max r / (alpha1 + alpha2 s) over probes
    double worst_delta_ratio = 0.0;
};

// Probes the task with perturbed gradient-descent trajectories and fits the
// smallest constants satisfying Assumptions 4-5 on every probed point.
AssumptionEstimates estimate_assumption_constants(const LearningTask& task, int staleness_bound,
                                                  int probe_budget, std::uint64_t seed);

// Same fit, but over recorded model paths from actual runs.
AssumptionEstimates estimate_constants_from_paths(
    const LearningTask& task, const std::vector<std::vector<std::vector<double>>>& model_paths,
    int staleness_bound);

}  // namespace uavafl
