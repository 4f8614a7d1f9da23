#pragma once

#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ptpmx/empirical_pdf.hpp"
#include "ptpmx/obs_models.hpp"
#include "ptpmx/rng.hpp"

namespace ptpmx {

// Observations are inconsistent with the delay pdf supports (e.g. the
// wrong pdf file was supplied); surfaced instead of guessing.
struct EmptyPosteriorError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Integration range for one scalar parameter of a Riemann sum.
struct RiemannGrid {
    double bin_width = 0.0;
    double lo = 0.0;
    double hi = 0.0;
};

enum class Filter { Min, Max, Mean, Median };

Filter parse_filter(const std::string& name);
std::string filter_name(Filter f);

// min/max/mean/median of a vector; median of an even count averages the
// two central order statistics.
double filter_value(std::span<const double> values, Filter f);

// Conventional estimate (xi(y1) - xi(y2)) / 2 on the current block.
double conventional(const ObservationSet& obs, Filter f);

struct BiasEntry {
    double mu = 0.0;         // seconds
    double std_error = 0.0;  // seconds
};

// Monte Carlo estimate of the conventional-filter bias
// mu = (E[xi(w1)] - E[xi(w2)]) / 2 for P-sample blocks.
BiasEntry bias_of(Filter f, int pairs, const EmpiricalPdf& f1, const EmpiricalPdf& f2,
                  std::size_t num_trials, Rng& rng);

// Bias per (filter, P); persisted as CSV filter,P,mu_us,se_us.
struct BiasTable {
    std::map<std::pair<std::string, int>, BiasEntry> entries;

    void set(Filter f, int pairs, BiasEntry e);
    const BiasEntry* find(Filter f, int pairs) const;
    void save_csv(const std::string& path) const;
    static BiasTable load_csv(const std::string& path);
};

struct EstimateReport {
    double estimate = 0.0;  // seconds
    std::string estimator_id;
    std::size_t grid_bins_used = 0;
    double log_normalizer = 0.0;  // log of the denominator integral
};

// Posterior-mean location estimate of theta from values v_i = theta + w_i,
// w ~ f, by Riemann summation over the feasible interval
// [max v - support_hi, min v - support_lo].
double pitman_scalar(std::span<const double> values, const EmpiricalPdf& f,
                     double bin_width);

// Minimax phase-offset estimators, one per observation model. bin_width
// selects the Riemann grid; it must be an integer multiple of the pdf bin
// width (the pdfs are re-binned onto it) and the two pdfs must end up on
// a common grid. Pass 0 to use the pdfs' own bin width.
EstimateReport minimax_k(const ObservationSet& obs, const EmpiricalPdf& f1,
                         const EmpiricalPdf& f2, double bin_width);
EstimateReport minimax_s(const ObservationSet& obs, const EmpiricalPdf& f1,
                         const EmpiricalPdf& f2, double bin_width);
EstimateReport minimax_m(const ObservationSet& obs, const EmpiricalPdf& f1,
                         const EmpiricalPdf& f2, double bin_width);

// Dispatch on the observation model.
EstimateReport minimax(const ObservationSet& obs, const EmpiricalPdf& f1,
                       const EmpiricalPdf& f2, double bin_width);

void write_report_csv(const EstimateReport& report, const std::string& path);

}  // namespace ptpmx
