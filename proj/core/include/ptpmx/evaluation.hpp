#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ptpmx/empirical_pdf.hpp"
#include "ptpmx/estimators.hpp"
#include "ptpmx/obs_models.hpp"

namespace ptpmx {

// Synchronization accuracy target and the certainty level used to turn it
// into an error-standard-deviation budget.
struct ThresholdSpec {
    double accuracy = 1.25e-6;  // seconds
    double sigma_level = 5.0;

    double std_threshold() const { return accuracy / sigma_level; }
    double mse_threshold() const { return std_threshold() * std_threshold(); }
};

struct MseResult {
    double mse = 0.0;           // seconds^2
    double ci_halfwidth = 0.0;  // 95% normal CI on the mean squared error
};

struct MseCurve {
    std::string estimator_id;  // "minimax", "min", "max", "mean", "median"
    ModelVariant variant = ModelVariant::S;
    int blocks = 0;
    std::vector<int> p_values;
    std::vector<double> mse;           // seconds^2
    std::vector<double> ci_halfwidth;  // seconds^2
    std::size_t trials = 0;
    uint64_t seed = 0;
};

// Per-trial squared errors for one estimator, θ = 0, matched draws across
// the estimators of one call.
struct TrialErrors {
    std::string estimator_id;
    std::vector<double> sq_err;  // seconds^2, indexed by trial
};

MseResult summarize_sq_errors(std::span<const double> sq);

// Runs `trials` paired Monte Carlo trials at θ = 0: trial t draws one
// observation set from substream (seed, t) and every estimator scores the
// same draw. Conventional filters are bias-compensated via the table (or
// an internally computed bias when absent). Results are deterministic for
// any worker count.
std::vector<TrialErrors> trial_errors(const std::vector<std::string>& estimators,
                                      const ModelKind& kind, const EmpiricalPdf& f1,
                                      const EmpiricalPdf& f2, double bin_width,
                                      std::size_t trials, uint64_t seed,
                                      const BiasTable* bias = nullptr, int workers = 1,
                                      std::size_t bias_trials = 1000000);

MseResult mse_at(const std::string& estimator, const ModelKind& kind,
                 const EmpiricalPdf& f1, const EmpiricalPdf& f2, double bin_width,
                 std::size_t trials, uint64_t seed, const BiasTable* bias = nullptr,
                 int workers = 1);

// Max-MSE versus P for each estimator, paired draws per trial.
std::vector<MseCurve> curve(const std::vector<std::string>& estimators,
                            const ModelKind& kind_template, const std::vector<int>& p_values,
                            const EmpiricalPdf& f1, const EmpiricalPdf& f2, double bin_width,
                            std::size_t trials, uint64_t seed,
                            const BiasTable* bias = nullptr, int workers = 1);

void write_curves_csv(const std::vector<MseCurve>& curves, std::ostream& out);
void write_curves_csv(const std::vector<MseCurve>& curves, const std::string& path);

// Reference evaluators: direct Riemann summation of the unsimplified
// posterior-mean integrals over the full parameter grid, via public pdf
// accessors. Deliberately independent of the factored estimator path;
// used to cross-check it.
double brute_force_minimax_s(const ObservationSet& obs, const EmpiricalPdf& f1,
                             const EmpiricalPdf& f2, double bin_width);
double brute_force_minimax_m(const ObservationSet& obs, const EmpiricalPdf& f1,
                             const EmpiricalPdf& f2, double bin_width);

struct CorollaryEntry {
    int k = 0;
    int nodes = 0;           // k * l
    double rho = 0.0;        // S-model minimax max-MSE at this node count
    double ci = 0.0;
    double scaled_rho = 0.0;  // k * rho(l)
    double scaled_ci = 0.0;
    bool holds = false;  // rho CI lower bound >= 95% of scaled CI upper bound
};

struct CorollaryReport {
    int l = 0;
    int pairs = 0;
    double rho_base = 0.0;
    double ci_base = 0.0;
    std::vector<CorollaryEntry> entries;
    bool all_hold = false;
};

// Verifies that the minimax MSE grows at least linearly in the node count
// when per-node delays are i.i.d.: builds the N-node pdfs by
// self-convolution and compares rho(K*L) against K*rho(L) with CI slack.
CorollaryReport corollary_check(const EmpiricalPdf& f1_single, const EmpiricalPdf& f2_single,
                                const std::vector<int>& k_values, int l, int pairs,
                                double bin_width, std::size_t trials, uint64_t seed,
                                int workers = 1);

struct PropertyResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct PropertyReport {
    ThresholdSpec threshold;
    std::vector<PropertyResult> results;
    bool all_pass() const {
        for (const auto& r : results) {
            if (!r.pass) return false;
        }
        return true;
    }
};

// Executable form of the documented invariants: shift invariance,
// unbiasedness, decomposition against the reference evaluators, MSE
// orderings, pdf algebra, queue stationarity, determinism.
PropertyReport property_suite(uint64_t seed, int workers = 1);

// Machine-readable report: threshold header lines, then one
// status,property,detail row per result.
void write_property_report(const PropertyReport& report, std::ostream& out);

}  // namespace ptpmx
