#include "wpcausal/montecarlo.hpp"

#include "wpcausal/errors.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>
#include <tuple>

namespace wpcausal {

InterventionWindow CellSpec::window() const {
    if (first_treatment >= 0) return {first_treatment};
    return {sim.k_times >= 8 ? sim.k_times - 4 : 0};
}

std::string CellSpec::label() const {
    std::ostringstream out;
    out << "N=" << sim.n_persons << ";K=" << sim.k_times << ";phi2=" << format_double(sim.phi2)
        << ";scenario=" << to_string(sim.scenario);
    return out.str();
}

const ArmResult& CellResult::arm(Method method, Centering centering) const {
    for (const auto& a : arms)
        if (a.method == method && a.centering == centering) return a;
    throw ConfigError("cell has no " + std::string(to_string(method)) + "/" + std::string(to_string(centering)) + " arm");
}

const ParameterSummary& CellResult::summary(Method method, Centering centering, const std::string& parameter) const {
    for (const auto& p : arm(method, centering).parameters)
        if (p.name == parameter) return p;
    throw ConfigError("no parameter named '" + parameter + "'");
}

std::vector<ParameterSummary> summarize_estimates(const MatrixXd& estimates, const NamedVector& truth) {
    std::vector<ParameterSummary> out;
    for (std::size_t j = 0; j < truth.names.size(); ++j) {
        ParameterSummary s;
        s.name = truth.names[j];
        s.truth = truth.values(static_cast<Eigen::Index>(j));
        // Replication order fixed by index, so the sums are reproducible.
        double sum = 0.0, sq = 0.0;
        int n = 0;
        for (Eigen::Index r = 0; r < estimates.rows(); ++r) {
            const double x = estimates(r, static_cast<Eigen::Index>(j));
            if (std::isnan(x)) continue;
            sum += x - s.truth;
            sq += (x - s.truth) * (x - s.truth);
            ++n;
        }
        s.used = n;
        if (n == 0) {
            s.bias = s.rmse = s.mc_se = std::numeric_limits<double>::quiet_NaN();
        } else {
            s.bias = sum / n;
            s.rmse = std::sqrt(sq / n);
            double ss = 0.0;
            for (Eigen::Index r = 0; r < estimates.rows(); ++r) {
                const double x = estimates(r, static_cast<Eigen::Index>(j));
                if (!std::isnan(x)) ss += (x - s.truth - s.bias) * (x - s.truth - s.bias);
            }
            s.mc_se = n > 1 ? std::sqrt(ss / (n - 1.0) / n) : std::numeric_limits<double>::quiet_NaN();
        }
        out.push_back(std::move(s));
    }
    return out;
}

namespace {

struct ArmOutcome {
    enum class Status { ok, discarded, error } status = Status::ok;
    VectorXd values;  // aligned with the truth vector, NaN when absent
    std::string message;
};

struct Replication {
    bool step1_usable = true;
    std::vector<ArmOutcome> arms;  // same order as the arm list
};

Replication run_replication(const CellSpec& spec, const NamedVector& truth,
                            const std::vector<std::pair<Method, Centering>>& arms, int rep) {
    SimConfig config = spec.sim;
    config.seed = derive_seed(spec.sim.seed, static_cast<std::uint64_t>(rep));
    const SimulatedPanel sim = generate(config);

    Replication out;
    std::optional<Step1Result> step1;
    const bool needs_step1 = std::any_of(arms.begin(), arms.end(), [](const auto& a) {
        return a.second == Centering::proposed || a.second == Centering::trait_predictor;
    });
    if (needs_step1) {
        step1 = run_step1(sim.observed, spec.fit);
        out.step1_usable = step1->fits_usable() && step1->proposed_available();
    }

    const InterventionWindow window = spec.window();
    std::vector<std::optional<ScoreSet>> scores(all_centerings().size());
    std::vector<std::string> score_errors(all_centerings().size());
    for (const auto& [method, centering] : arms) {
        ArmOutcome arm;
        arm.values = VectorXd::Constant(static_cast<Eigen::Index>(truth.names.size()),
                                        std::numeric_limits<double>::quiet_NaN());
        const bool step1_arm = centering == Centering::proposed || centering == Centering::trait_predictor;
        if (step1_arm && !(step1->fits_usable() && (centering != Centering::proposed || step1->proposed_available()))) {
            arm.status = ArmOutcome::Status::discarded;
            out.arms.push_back(std::move(arm));
            continue;
        }
        const auto slot = static_cast<std::size_t>(centering);
        try {
            if (!scores[slot]) {
                CenteringInputs inputs{step1 ? &*step1 : nullptr, &sim.true_traits};
                scores[slot] = center(sim.observed, centering, inputs);
            }
            CausalEstimates est;
            if (method == Method::msm) {
                MsmOptions options = spec.msm;
                options.window = window;
                est = estimate_msm(*scores[slot], options);
            } else {
                est = g_estimate(*scores[slot], {window, spec.confounder_interactions}, spec.nuisance).tau;
            }
            for (std::size_t j = 0; j < truth.names.size(); ++j) {
                if (const auto v = est.estimate(truth.names[j])) arm.values(static_cast<Eigen::Index>(j)) = *v;
            }
        } catch (const Error& e) {
            arm.status = ArmOutcome::Status::error;
            arm.message = std::string(to_string(method)) + "/" + std::string(to_string(centering)) + " rep " +
                          std::to_string(rep) + ": " + e.what();
        }
        out.arms.push_back(std::move(arm));
    }
    return out;
}

}  // namespace

CellResult run_cell(const CellSpec& spec, int workers) {
    if (spec.replications < 1) throw ConfigError("replications must be at least 1");
    spec.sim.validate();
    const InterventionWindow window = spec.window();
    window.validate(spec.sim.k_times);

    CellResult result;
    result.spec = spec;
    result.replications = spec.replications;
    result.truth = true_tau(spec.sim.k_times, window.first_treatment, spec.sim.dynamics);

    std::vector<std::pair<Method, Centering>> arms;
    for (Method m : spec.methods)
        for (Centering c : spec.centerings) arms.emplace_back(m, c);

    std::vector<Replication> reps(static_cast<std::size_t>(spec.replications));
    std::atomic<int> next{0};
    std::mutex error_mutex;
    std::exception_ptr failure;
    auto worker = [&] {
        for (int r = next++; r < spec.replications; r = next++) {
            try {
                reps[static_cast<std::size_t>(r)] = run_replication(spec, result.truth, arms, r);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    const int n_threads = std::clamp(workers, 1, spec.replications);
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < n_threads; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);

    const auto p = static_cast<Eigen::Index>(result.truth.names.size());
    for (std::size_t a = 0; a < arms.size(); ++a) {
        ArmResult arm;
        arm.method = arms[a].first;
        arm.centering = arms[a].second;
        arm.estimates = MatrixXd::Constant(spec.replications, p, std::numeric_limits<double>::quiet_NaN());
        for (int r = 0; r < spec.replications; ++r) {
            const ArmOutcome& o = reps[static_cast<std::size_t>(r)].arms[a];
            switch (o.status) {
                case ArmOutcome::Status::ok: arm.estimates.row(r) = o.values.transpose(); break;
                case ArmOutcome::Status::discarded: ++arm.discarded; break;
                case ArmOutcome::Status::error:
                    ++arm.errors;
                    if (result.messages.size() < 20) result.messages.push_back(o.message);
                    break;
            }
        }
        arm.parameters = summarize_estimates(arm.estimates, result.truth);
        if (2 * arm.discards() > spec.replications) result.failed = true;
        result.arms.push_back(std::move(arm));
    }
    for (const auto& r : reps)
        if (!r.step1_usable) ++result.discarded_improper;
    return result;
}

namespace {

std::string fixed(double x, int digits) {
    if (std::isnan(x)) return "NA";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, x);
    return buf;
}

std::string csv_number(double x) { return std::isnan(x) ? "NA" : format_double(x); }

}  // namespace

Report summarize(const std::vector<CellResult>& results) {
    if (results.empty()) throw ConfigError("nothing to summarize");
    struct Row {
        const CellResult* cell;
        const ArmResult* arm;
        std::size_t param;
    };
    std::vector<Row> rows;
    for (const auto& cell : results)
        for (const auto& arm : cell.arms)
            for (std::size_t j = 0; j < arm.parameters.size(); ++j) rows.push_back({&cell, &arm, j});

    auto key = [](const Row& r) {
        const auto& s = r.cell->spec.sim;
        return std::make_tuple(s.phi2, s.k_times, s.n_persons, static_cast<int>(s.scenario),
                               static_cast<int>(r.arm->method), static_cast<int>(r.arm->centering), r.param);
    };
    std::stable_sort(rows.begin(), rows.end(), [&](const Row& a, const Row& b) { return key(a) < key(b); });

    std::ostringstream csv, md;
    csv << "cell,method,centering,parameter,bias,rmse,mc_se,discards\n";
    md << "| cell | method | centering | parameter | bias | rmse | mc_se | discards |\n"
       << "|---|---|---|---|---:|---:|---:|---:|\n";
    for (const auto& r : rows) {
        const auto& ps = r.arm->parameters[r.param];
        const std::string label = r.cell->spec.label();
        csv << label << ',' << to_string(r.arm->method) << ',' << to_string(r.arm->centering) << ',' << ps.name << ','
            << csv_number(ps.bias) << ',' << csv_number(ps.rmse) << ',' << csv_number(ps.mc_se) << ','
            << r.arm->discards() << '\n';
        md << "| " << label << " | " << to_string(r.arm->method) << " | " << to_string(r.arm->centering) << " | "
           << ps.name << " | " << fixed(ps.bias, 4) << " | " << fixed(ps.rmse, 4) << " | " << fixed(ps.mc_se, 4)
           << " | " << r.arm->discards() << " |\n";
    }
    for (const auto& cell : results) {
        if (cell.failed) md << "\nFAILED cell " << cell.spec.label() << ": more than half the replications discarded\n";
    }
    return {csv.str(), md.str()};
}

}  // namespace wpcausal
