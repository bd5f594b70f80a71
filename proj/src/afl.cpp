#include "uavafl/afl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "uavafl/errors.hpp"

namespace uavafl {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double squared_norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

}  // namespace

std::vector<int> Schedule::selected_at(int slot_index) const {
    std::vector<int> out;
    for (int m = 0; m < device_count(); ++m) {
        if (selection[m][slot_index]) out.push_back(m);
    }
    return out;
}

TrainingEngine::TrainingEngine(const Scenario& scenario, const LearningTask& task,
                               const RunOptions& options)
    : scenario_(&scenario),
      task_(&task),
      options_(options),
      channels_(scenario, substream_seed(options.seed, "phases")),
      noise_seed_(substream_seed(options.seed, "noise")) {
    const int m = scenario.device_count();
    if (task.device_count() != m) throw ShapeError("task and scenario device counts differ");
    model_ = options.initial_model.empty() ? std::vector<double>(task.dimension(), 0.0)
                                           : options.initial_model;
    if (static_cast<int>(model_.size()) != task.dimension()) {
        throw ShapeError("initial model dimension mismatch");
    }
    // Bootstrap: every device holds a gradient computed from x(1).
    cached_.resize(m);
    for (int d = 0; d < m; ++d) cached_[d] = task.local_gradient(d, model_);
    last_selected_.assign(m, 0);
    busy_until_.assign(m, 0);
    basis_slot_.assign(m, 1);
}

bool TrainingEngine::ready(int device) const {
    return busy_until_[device] < slot_ && !cached_[device].empty();
}

void TrainingEngine::require_ready(const std::vector<int>& selected) const {
    for (int m : selected) {
        if (m < 0 || m >= scenario_->device_count()) throw SchedulingError("device index out of range");
        if (busy_until_[m] >= slot_) {
            std::ostringstream os;
            os << "device " << m << " is busy until slot " << busy_until_[m]
               << " but selected at slot " << slot_;
            throw SchedulingError(os.str());
        }
        if (cached_[m].empty()) throw SchedulingError("device has no computed gradient");
    }
}

ErrorBreakdown TrainingEngine::decompose(const std::vector<int>& selected,
                                         const AggregationResult& agg) const {
    const int dim = task_->dimension();
    const int m_all = scenario_->device_count();
    ErrorBreakdown e;
    e.asynchrony.assign(dim, 0.0);
    e.selection.assign(dim, 0.0);
    e.comm = agg.comm_error;
    e.total.assign(dim, 0.0);

    std::vector<double> mean_all(dim, 0.0);
    for (int m = 0; m < m_all; ++m) {
        for (int i = 0; i < dim; ++i) mean_all[i] += cached_[m][i];
    }
    for (double& v : mean_all) v /= m_all;

    const std::vector<double> grad = task_->global_gradient(model_);
    for (int i = 0; i < dim; ++i) {
        e.asynchrony[i] = grad[i] - mean_all[i];
        e.selection[i] = mean_all[i] - agg.true_mean[i];
        e.total[i] = e.asynchrony[i] + e.selection[i] + e.comm[i];
    }
    (void)selected;
    return e;
}

void TrainingEngine::scan_staleness() {
    if (scanned_slot_ == slot_) return;
    for (int m = 0; m < scenario_->device_count(); ++m) {
        max_staleness_ = std::max(max_staleness_, slot_ - last_selected_[m]);
    }
    scanned_slot_ = slot_;
}

AggregationResult TrainingEngine::transmit(const std::vector<int>& selected, Vec3 uav_position,
                                           const std::vector<double>& amplitudes) {
    scan_staleness();
    require_ready(selected);
    const std::size_t n = selected.size();
    if (amplitudes.size() != n) throw ShapeError("amplitude column length mismatch");
    const double cap = scenario_->amplitude_cap() * (1.0 + 1e-12);

    std::vector<std::vector<double>> grads(n);
    std::vector<ChannelRealization> chans(n);
    std::vector<DeviceGain> gains(n);
    for (std::size_t i = 0; i < n; ++i) {
        const int m = selected[i];
        if (amplitudes[i] < 0.0 || amplitudes[i] > cap) {
            throw SchedulingError("amplitude exceeds the transmit power constraint");
        }
        grads[i] = cached_[m];
        chans[i] = channels_.realize(uav_position, m, slot_);
        gains[i] = {chans[i].magnitude, amplitudes[i], normalize(grads[i]).variance};
    }
    TransceiverConfig tc;
    tc.slot = slot_;
    tc.amplitudes = amplitudes;
    tc.zeta = optimal_zeta(gains, scenario_->noise_power, static_cast<int>(n));

    Rng noise(hash_combine(noise_seed_, static_cast<std::uint64_t>(slot_)));
    AggregationResult agg =
        transmit_and_aggregate(grads, chans, tc, scenario_->noise_power, noise);
    for (int m : selected) last_selected_[m] = slot_;
    return agg;
}

void TrainingEngine::apply_update(const std::vector<double>& aggregated,
                                  const std::vector<int>& broadcast_to) {
    const double lr = options_.params.learning_rate;
    for (std::size_t i = 0; i < model_.size(); ++i) model_[i] -= lr * aggregated[i];
    for (int m : broadcast_to) {
        busy_until_[m] = slot_ + scenario_->devices[m].compute_slots;
        cached_[m] = task_->local_gradient(m, model_);
        basis_slot_[m] = slot_ + 1;
    }
}

void TrainingEngine::advance_slot() {
    scan_staleness();
    ++slot_;
}

SlotOutcome TrainingEngine::step(const std::vector<int>& selected, Vec3 uav_position,
                                 const std::vector<double>& amplitudes) {
    SlotOutcome out;
    scan_staleness();
    if (selected.empty()) {
        advance_slot();
        return out;
    }
    if (options_.error_free) {
        require_ready(selected);
        const int dim = task_->dimension();
        out.agg.true_mean.assign(dim, 0.0);
        for (int m : selected) {
            for (int i = 0; i < dim; ++i) out.agg.true_mean[i] += cached_[m][i];
        }
        for (double& v : out.agg.true_mean) v /= static_cast<double>(selected.size());
        out.agg.estimate = out.agg.true_mean;
        out.agg.comm_error.assign(dim, 0.0);
        for (int m : selected) last_selected_[m] = slot_;
        out.nmse_db = kNegInf;
    } else {
        out.agg = transmit(selected, uav_position, amplitudes);
        const double truth_sq = squared_norm(out.agg.true_mean);
        out.nmse_db = truth_sq > 0.0 ? nmse_db(out.agg.estimate, out.agg.true_mean) : kNan;
    }
    out.errors = decompose(selected, out.agg);
    apply_update(out.agg.estimate, selected);
    out.updated = true;
    advance_slot();
    return out;
}

std::optional<std::string> check_schedule(const Scenario& scenario, const Schedule& schedule,
                                          int staleness_bound, bool check_staleness) {
    const int m_count = scenario.device_count();
    const int k_count = scenario.num_slots;
    if (schedule.device_count() != m_count || schedule.slot_count() != k_count) {
        throw ShapeError("schedule dimensions do not match the scenario");
    }
    for (int m = 0; m < m_count; ++m) {
        const int c = scenario.devices[m].compute_slots;
        int last = 0;  // bootstrap
        for (int k = 1; k <= k_count; ++k) {
            if (!schedule.selection[m][k - 1]) continue;
            if (last > 0 && k - last <= c) {
                std::ostringstream os;
                os << "device " << m << " selected at slot " << k << " while computing (slot "
                   << last << " + c=" << c << ")";
                return os.str();
            }
            if (check_staleness && k - last > staleness_bound) {
                std::ostringstream os;
                os << "device " << m << " staleness " << (k - last) << " exceeds S="
                   << staleness_bound << " at slot " << k;
                return os.str();
            }
            last = k;
        }
        if (check_staleness && k_count - staleness_bound + 1 >= 1 && last < k_count - staleness_bound + 1) {
            std::ostringstream os;
            os << "device " << m << " not selected in the final staleness window (last=" << last
               << ", K=" << k_count << ", S=" << staleness_bound << ")";
            return os.str();
        }
    }
    return std::nullopt;
}

TrainingHistory run_training(const Scenario& scenario, const Schedule& schedule,
                             const LearningTask& task, const RunOptions& options) {
    const int k_count = scenario.num_slots;
    if (static_cast<int>(schedule.trajectory.positions.size()) != k_count + 1) {
        throw ShapeError("schedule trajectory must have K+1 positions");
    }
    const std::vector<TrajectoryViolation> mech = validate_trajectory(scenario, schedule.trajectory);
    if (!mech.empty()) throw InfeasibleError(mech.front().describe());
    if (const auto violation = check_schedule(scenario, schedule, options.params.staleness_bound,
                                              options.enforce_staleness)) {
        throw InfeasibleError(*violation);
    }

    TrainingEngine engine(scenario, task, options);
    TrainingHistory history;
    history.rows.reserve(k_count + 1);
    if (options.record_models) history.model_path.push_back(engine.model());

    const std::optional<double> f_star = task.optimal_value();
    double nmse_sum = 0.0;
    int nmse_slots = 0;
    bool nmse_exact = false;

    for (int k = 1; k <= k_count; ++k) {
        const std::vector<int> selected = schedule.selected_at(k - 1);
        std::vector<double> b_col(selected.size());
        for (std::size_t i = 0; i < selected.size(); ++i) {
            b_col[i] = schedule.amplitudes[selected[i]][k - 1];
        }

        HistoryRow row;
        row.slot = k;
        row.loss = task.global_loss(engine.model());
        row.gap = f_star ? row.loss - *f_star : kNan;
        row.test_accuracy = task.test_accuracy(engine.model());
        row.n_selected = static_cast<int>(selected.size());

        SlotAudit audit;
        if (options.record_audit && !selected.empty() && !options.error_free) {
            // Reconstruct the deterministic part of the slot signal before the
            // engine replaces the cached gradients.
            std::vector<DeviceGain> gains(selected.size());
            std::vector<std::vector<std::complex<double>>> symbols(selected.size());
            for (std::size_t i = 0; i < selected.size(); ++i) {
                const NormalizedGradient n = normalize(engine.cached_gradient(selected[i]));
                gains[i] = {channel_magnitude(scenario, schedule.trajectory.positions[k],
                                              selected[i]),
                            b_col[i], n.variance};
                symbols[i] = n.degenerate ? std::vector<std::complex<double>>(task.dimension() / 2)
                                          : modulate(n.tilde);
            }
            const double zeta =
                optimal_zeta(gains, scenario.noise_power, static_cast<int>(selected.size()));
            audit.delta_signal.assign(task.dimension() / 2, {0.0, 0.0});
            for (std::size_t i = 0; i < selected.size(); ++i) {
                if (gains[i].variance <= 0.0) continue;
                const double delta = std::sqrt(gains[i].variance) / selected.size() -
                                     zeta * gains[i].channel_mag * gains[i].amplitude;
                for (std::size_t cidx = 0; cidx < audit.delta_signal.size(); ++cidx) {
                    audit.delta_signal[cidx] += delta * symbols[i][cidx];
                }
            }
        }

        const std::vector<double> model_before = options.record_audit
                                                     ? engine.model()
                                                     : std::vector<double>();
        const SlotOutcome outcome =
            engine.step(selected, schedule.trajectory.positions[k], b_col);

        if (outcome.updated && !std::isnan(outcome.nmse_db)) {
            if (std::isinf(outcome.nmse_db)) {
                nmse_exact = true;
            } else {
                nmse_sum += outcome.nmse_db;
                ++nmse_slots;
            }
        }
        row.nmse_db = outcome.updated ? outcome.nmse_db : kNan;
        row.max_staleness = engine.max_staleness_seen();
        history.rows.push_back(row);

        if (options.record_audit) {
            audit.slot = k;
            audit.n_selected = row.n_selected;
            if (outcome.updated) {
                audit.ea_sq = squared_norm(outcome.errors.asynchrony);
                audit.ed_sq = squared_norm(outcome.errors.selection);
                audit.ec_sq = squared_norm(outcome.errors.comm);
                audit.e_sq = squared_norm(outcome.errors.total);
                audit.zeta = outcome.agg.zeta;
                audit.analytic_mse = outcome.agg.analytic_mse;

                const std::vector<double> grad = task.global_gradient(model_before);
                audit.grad_norm_sq = squared_norm(grad);

                double resid = 0.0;
                double upd = 0.0;
                const std::vector<double>& after = engine.model();
                const double lr = options.params.learning_rate;
                for (int i = 0; i < task.dimension(); ++i) {
                    const double indep = grad[i] - outcome.agg.estimate[i];
                    resid += (indep - outcome.errors.total[i]) * (indep - outcome.errors.total[i]);
                    const double expected = model_before[i] - lr * (grad[i] - outcome.errors.total[i]);
                    upd += (after[i] - expected) * (after[i] - expected);
                }
                audit.decomposition_residual = std::sqrt(resid);
                audit.update_residual = std::sqrt(upd);
            } else {
                audit.grad_norm_sq = squared_norm(task.global_gradient(engine.model()));
            }
            history.audit.push_back(audit);
        }
        if (options.record_models) history.model_path.push_back(engine.model());
    }

    HistoryRow last;
    last.slot = k_count + 1;
    last.loss = task.global_loss(engine.model());
    last.gap = f_star ? last.loss - *f_star : kNan;
    last.test_accuracy = task.test_accuracy(engine.model());
    last.nmse_db = kNan;
    last.max_staleness = engine.max_staleness_seen();
    last.n_selected = 0;
    history.rows.push_back(last);

    history.final_model = engine.model();
    history.final_loss = last.loss;
    history.final_gap = last.gap;
    history.max_staleness = engine.max_staleness_seen();
    history.mean_nmse_db = nmse_slots > 0 ? nmse_sum / nmse_slots
                                          : (nmse_exact ? kNegInf : kNan);
    return history;
}

std::vector<TrainingHistory> run_trials_serial(const Scenario& scenario, const Schedule& schedule,
                                               const LearningTask& task, const RunOptions& options,
                                               int trials, std::uint64_t seed) {
    std::vector<TrainingHistory> out(trials);
    for (int t = 0; t < trials; ++t) {
        RunOptions o = options;
        o.seed = hash_combine(seed, t);
        out[t] = run_training(scenario, schedule, task, o);
    }
    return out;
}

std::vector<TrainingHistory> run_trials(const Scenario& scenario, const Schedule& schedule,
                                        const LearningTask& task, const RunOptions& options,
                                        int trials, std::uint64_t seed) {
    std::vector<TrainingHistory> out(trials);
    std::string failure;  // exceptions cannot unwind out of the parallel region
#pragma omp parallel for schedule(dynamic)
    for (int t = 0; t < trials; ++t) {
        try {
            RunOptions o = options;
            o.seed = hash_combine(seed, t);
            out[t] = run_training(scenario, schedule, task, o);
        } catch (const std::exception& e) {
#pragma omp critical
            failure = e.what();
        }
    }
    if (!failure.empty()) throw InfeasibleError(failure);
    return out;
}

namespace {

struct PairScan {
    double delta = 0.0;
    double alpha1 = 0.0;
    double alpha2 = 0.0;
    double worst_alpha_ratio = 0.0;
    double worst_delta_ratio = 0.0;
};

PairScan fit_constants(const LearningTask& task,
                       const std::vector<std::vector<std::vector<double>>>& paths,
                       int staleness_bound) {
    PairScan fit;
    std::vector<std::vector<double>> grad_sq(paths.size());
    for (std::size_t p = 0; p < paths.size(); ++p) {
        grad_sq[p].resize(paths[p].size());
        for (std::size_t k = 0; k < paths[p].size(); ++k) {
            const std::vector<double> g = task.global_gradient(paths[p][k]);
            grad_sq[p][k] = squared_norm(g);
            const std::vector<double>& x = paths[p][k];
            for (int m = 0; m < task.device_count(); ++m) {
                const std::vector<double> gm = task.local_gradient(m, x);
                double dev = 0.0;
                for (std::size_t i = 0; i < g.size(); ++i) dev += (gm[i] - g[i]) * (gm[i] - g[i]);
                fit.delta = std::max(fit.delta, std::sqrt(dev));
            }
        }
    }

    const int window = 2 * staleness_bound;
    std::vector<std::pair<double, double>> pairs;  // (r, s)
    double mean_s = 0.0;
    std::size_t count = 0;
    for (std::size_t p = 0; p < paths.size(); ++p) {
        const auto& gs = grad_sq[p];
        for (std::size_t k = 0; k < gs.size(); ++k) {
            for (int a = 0; a <= window && a <= static_cast<int>(k); ++a) {
                pairs.emplace_back(gs[k - a], gs[k]);
                mean_s += gs[k];
                ++count;
            }
        }
    }
    if (count > 0) mean_s /= static_cast<double>(count);

    const double grid[] = {0.0, 0.01, 0.05, 0.1, 0.25, 0.5, 1.0, 2.0};
    double best_score = std::numeric_limits<double>::infinity();
    for (double a2 : grid) {
        double a1 = 0.0;
        for (const auto& [r, s] : pairs) a1 = std::max(a1, r - a2 * s);
        const double score = a1 + a2 * mean_s;
        if (score < best_score) {
            best_score = score;
            fit.alpha1 = a1;
            fit.alpha2 = a2;
        }
    }
    for (const auto& [r, s] : pairs) {
        const double cap = fit.alpha1 + fit.alpha2 * s;
        if (cap > 0.0) fit.worst_alpha_ratio = std::max(fit.worst_alpha_ratio, r / cap);
    }
    fit.worst_delta_ratio = 1.0;  // delta is fitted as the max, ratio 1 by construction
    return fit;
}

}  // namespace

AssumptionEstimates estimate_constants_from_paths(
    const LearningTask& task, const std::vector<std::vector<std::vector<double>>>& model_paths,
    int staleness_bound) {
    AssumptionEstimates out;
    const PairScan fit = fit_constants(task, model_paths, staleness_bound);
    out.delta = fit.delta;
    out.alpha1 = fit.alpha1;
    out.alpha2 = fit.alpha2;
    out.worst_alpha_ratio = fit.worst_alpha_ratio;
    out.worst_delta_ratio = fit.worst_delta_ratio;
    if (task.exact_mu() && task.exact_lipschitz()) {
        out.mu = *task.exact_mu();
        out.lipschitz = *task.exact_lipschitz();
    } else {
        // Secant estimates over consecutive path points.
        double lo = std::numeric_limits<double>::infinity();
        double hi = 0.0;
        for (const auto& path : model_paths) {
            for (std::size_t k = 0; k + 1 < path.size(); ++k) {
                const std::vector<double> g0 = task.global_gradient(path[k]);
                const std::vector<double> g1 = task.global_gradient(path[k + 1]);
                double dg = 0.0;
                double dx = 0.0;
                double inner = 0.0;
                for (std::size_t i = 0; i < g0.size(); ++i) {
                    dg += (g1[i] - g0[i]) * (g1[i] - g0[i]);
                    const double step = path[k + 1][i] - path[k][i];
                    dx += step * step;
                    inner += (g1[i] - g0[i]) * step;
                }
                if (dx > 1e-18) {
                    hi = std::max(hi, std::sqrt(dg / dx));
                    lo = std::min(lo, inner / dx);
                }
            }
        }
        out.lipschitz = hi * 1.2;
        out.mu = std::max(lo * 0.9, 1e-9);
    }
    return out;
}

AssumptionEstimates estimate_assumption_constants(const LearningTask& task, int staleness_bound,
                                                  int probe_budget, std::uint64_t seed) {
    Rng rng(substream_seed(seed, "assumption-probe"));
    const int dim = task.dimension();

    double lipschitz = task.exact_lipschitz().value_or(0.0);
    if (lipschitz <= 0.0) {
        for (int trial = 0; trial < 32; ++trial) {
            std::vector<double> x(dim), y(dim);
            for (int i = 0; i < dim; ++i) {
                x[i] = rng.gaussian(0.0, 2.0);
                y[i] = x[i] + rng.gaussian(0.0, 0.5);
            }
            const std::vector<double> gx = task.global_gradient(x);
            const std::vector<double> gy = task.global_gradient(y);
            double dg = 0.0;
            double dx = 0.0;
            for (int i = 0; i < dim; ++i) {
                dg += (gx[i] - gy[i]) * (gx[i] - gy[i]);
                dx += (x[i] - y[i]) * (x[i] - y[i]);
            }
            if (dx > 0.0) lipschitz = std::max(lipschitz, std::sqrt(dg / dx));
        }
        lipschitz *= 1.2;
    }

    std::vector<std::vector<std::vector<double>>> paths;
    const int steps = std::max(4 * staleness_bound, 16);
    for (int p = 0; p < std::max(probe_budget, 1); ++p) {
        std::vector<std::vector<double>> path;
        std::vector<double> x(dim);
        for (int i = 0; i < dim; ++i) x[i] = rng.gaussian(0.0, p == 0 ? 0.0 : 1.0);
        path.push_back(x);
        for (int t = 0; t < steps; ++t) {
            const std::vector<double> g = task.global_gradient(x);
            const double jitter = 0.02 * std::sqrt(squared_norm(g) / dim);
            for (int i = 0; i < dim; ++i) {
                x[i] -= g[i] / lipschitz + rng.gaussian(0.0, jitter);
            }
            path.push_back(x);
        }
        paths.push_back(std::move(path));
    }
    AssumptionEstimates out = estimate_constants_from_paths(task, paths, staleness_bound);
    if (!task.exact_lipschitz()) out.lipschitz = lipschitz;
    return out;
}

}  // namespace uavafl
