#include "ptpmx/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>

namespace ptpmx {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Observation offsets snapped onto the bin lattice: values within 1e-9 of
// a bin boundary (in bin units) are treated as on it, so grid-multiple
// relationships survive floating-point rounding of the inputs.
inline long lattice_floor(double x) {
    return static_cast<long>(std::floor(x + 1e-9));
}

// Re-bin a pdf onto the requested integration grid; bin_width 0 keeps the
// pdf's own grid.
const EmpiricalPdf& prepare(const EmpiricalPdf& f, double bin_width,
                            std::optional<EmpiricalPdf>& storage) {
    if (bin_width <= 0.0 || bin_width == f.bin_width()) return f;
    storage.emplace(f.rebin(bin_width));
    return *storage;
}

void require_common_grid(const EmpiricalPdf& f1, const EmpiricalPdf& f2) {
    if (f1.bin_width() != f2.bin_width()) {
        char msg[128];
        std::snprintf(msg, sizeof(msg),
                      "pdf bin widths differ: %.6g us vs %.6g us",
                      f1.bin_width() * 1e6, f2.bin_width() * 1e6);
        throw std::invalid_argument(msg);
    }
}

struct ScalarPosterior {
    double estimate = 0.0;
    std::size_t bins = 0;
    double log_normalizer = 0.0;
};

// Shared kernel of the minimax estimators: posterior mean of theta over
// the grid theta_j = (min v - origin) - j*w. On that grid the density
// lookup for v_i is the integer offset floor((v_i - min v)/w) + j, so the
// feasible interval and all likelihood values depend on the observations
// only through lattice offsets. Grid points outside the feasible
// intersection carry exactly zero likelihood and are omitted.
// Sub-bin posterior: the feasible interval is narrower than one grid bin
// and misses every lattice point, so the estimate is its midpoint.
ScalarPosterior interval_midpoint(double lo, double hi, double log_peak, double w) {
    ScalarPosterior out;
    out.estimate = 0.5 * (lo + hi);
    out.bins = 1;
    out.log_normalizer = log_peak + std::log(std::max(hi - lo, w * 1e-12));
    return out;
}

ScalarPosterior pitman_posterior(std::span<const double> values, const EmpiricalPdf& f) {
    if (values.empty()) throw std::invalid_argument("no observations");
    const double w = f.bin_width();
    const auto len = static_cast<long>(f.size());
    const double vref = *std::min_element(values.begin(), values.end());
    const double vmax = *std::max_element(values.begin(), values.end());

    // Continuum feasible interval; empty means the observations are
    // inconsistent with the support, regardless of grid placement.
    const double cont_lo = vmax - f.support_hi();
    const double cont_hi = vref - f.support_lo();
    if (cont_hi < cont_lo) {
        throw EmptyPosteriorError("empty posterior: observation spread exceeds the pdf support");
    }

    std::vector<long> off(values.size());
    long max_off = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        off[i] = lattice_floor((values[i] - vref) / w);
        max_off = std::max(max_off, off[i]);
    }
    const long j_lo = 0;
    const long j_hi = len - 1 - max_off;

    double m = kNegInf;
    std::vector<double> lw;
    if (j_hi >= j_lo) {
        const auto& ld = f.log_densities();
        lw.assign(static_cast<std::size_t>(j_hi - j_lo + 1), 0.0);
        for (long j = j_lo; j <= j_hi; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < off.size(); ++i) {
                const double v = ld[static_cast<std::size_t>(off[i] + j)];
                if (v == kNegInf) {
                    acc = kNegInf;
                    break;
                }
                acc += v;
            }
            lw[static_cast<std::size_t>(j - j_lo)] = acc;
            m = std::max(m, acc);
        }
    }
    if (m == kNegInf) {
        // No grid point carries mass; fall back to the sub-bin interval.
        const double mid = 0.5 * (cont_lo + cont_hi);
        double peak = 0.0;
        for (double v : values) peak += f.log_density(v - mid);
        if (peak == kNegInf) {
            throw EmptyPosteriorError("empty posterior: no point has positive likelihood");
        }
        return interval_midpoint(cont_lo, cont_hi, peak, w);
    }

    double s0 = 0.0, s1 = 0.0;
    for (long j = j_lo; j <= j_hi; ++j) {
        const double weight = std::exp(lw[static_cast<std::size_t>(j - j_lo)] - m);
        s0 += weight;
        s1 += weight * static_cast<double>(j);
    }

    ScalarPosterior out;
    out.estimate = (vref - f.origin()) - w * (s1 / s0);
    out.bins = static_cast<std::size_t>(j_hi - j_lo + 1);
    out.log_normalizer = m + std::log(s0) + std::log(w);
    return out;
}

}  // namespace

Filter parse_filter(const std::string& name) {
    if (name == "min") return Filter::Min;
    if (name == "max") return Filter::Max;
    if (name == "mean") return Filter::Mean;
    if (name == "median") return Filter::Median;
    throw std::invalid_argument("unknown filter: " + name);
}

std::string filter_name(Filter f) {
    switch (f) {
        case Filter::Min: return "min";
        case Filter::Max: return "max";
        case Filter::Mean: return "mean";
        case Filter::Median: return "median";
    }
    return "?";
}

double filter_value(std::span<const double> values, Filter f) {
    if (values.empty()) throw std::invalid_argument("no observations");
    switch (f) {
        case Filter::Min: return *std::min_element(values.begin(), values.end());
        case Filter::Max: return *std::max_element(values.begin(), values.end());
        case Filter::Mean: {
            double s = 0.0;
            for (double v : values) s += v;
            return s / static_cast<double>(values.size());
        }
        case Filter::Median: {
            std::vector<double> tmp(values.begin(), values.end());
            std::sort(tmp.begin(), tmp.end());
            const std::size_t n = tmp.size();
            return n % 2 == 1 ? tmp[n / 2] : 0.5 * (tmp[n / 2 - 1] + tmp[n / 2]);
        }
    }
    return 0.0;
}

double conventional(const ObservationSet& obs, Filter f) {
    obs.validate();
    return 0.5 * (filter_value(obs.y1_current(), f) - filter_value(obs.y2_current(), f));
}

BiasEntry bias_of(Filter f, int pairs, const EmpiricalPdf& f1, const EmpiricalPdf& f2,
                  std::size_t num_trials, Rng& rng) {
    if (pairs < 1) throw std::invalid_argument("need at least one pair");
    if (num_trials < 2) throw std::invalid_argument("need at least two trials");
    std::vector<double> w(static_cast<std::size_t>(pairs));
    double s1 = 0.0, q1 = 0.0, s2 = 0.0, q2 = 0.0;
    for (std::size_t t = 0; t < num_trials; ++t) {
        for (auto& v : w) v = f1.sample(rng);
        const double x1 = filter_value(w, f);
        for (auto& v : w) v = f2.sample(rng);
        const double x2 = filter_value(w, f);
        s1 += x1;
        q1 += x1 * x1;
        s2 += x2;
        q2 += x2 * x2;
    }
    const auto n = static_cast<double>(num_trials);
    const double m1 = s1 / n, m2 = s2 / n;
    const double v1 = std::max(0.0, q1 / n - m1 * m1);
    const double v2 = std::max(0.0, q2 / n - m2 * m2);
    BiasEntry e;
    e.mu = 0.5 * (m1 - m2);
    e.std_error = 0.5 * std::sqrt((v1 + v2) / n);
    return e;
}

void BiasTable::set(Filter f, int pairs, BiasEntry e) {
    entries[{filter_name(f), pairs}] = e;
}

const BiasEntry* BiasTable::find(Filter f, int pairs) const {
    const auto it = entries.find({filter_name(f), pairs});
    return it == entries.end() ? nullptr : &it->second;
}

void BiasTable::save_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "filter,P,mu_us,se_us\n";
    char buf[96];
    for (const auto& [key, e] : entries) {
        std::snprintf(buf, sizeof(buf), "%s,%d,%.17g,%.17g\n", key.first.c_str(),
                      key.second, e.mu * 1e6, e.std_error * 1e6);
        out << buf;
    }
}

BiasTable BiasTable::load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open bias table: " + path);
    BiasTable table;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line.rfind("filter,", 0) == 0) continue;
        std::istringstream row(line);
        std::string name, p_str, mu_str, se_str;
        std::getline(row, name, ',');
        std::getline(row, p_str, ',');
        std::getline(row, mu_str, ',');
        std::getline(row, se_str, ',');
        BiasEntry e;
        e.mu = std::stod(mu_str) * 1e-6;
        e.std_error = std::stod(se_str) * 1e-6;
        table.entries[{name, std::stoi(p_str)}] = e;
    }
    return table;
}

double pitman_scalar(std::span<const double> values, const EmpiricalPdf& f,
                     double bin_width) {
    std::optional<EmpiricalPdf> storage;
    return pitman_posterior(values, prepare(f, bin_width, storage)).estimate;
}

EstimateReport minimax_k(const ObservationSet& obs, const EmpiricalPdf& f1,
                         const EmpiricalPdf& f2, double bin_width) {
    obs.validate();
    if (obs.kind.variant != ModelVariant::K) {
        throw std::invalid_argument("minimax_k expects K-model observations");
    }
    std::optional<EmpiricalPdf> st1, st2;
    const EmpiricalPdf& p1 = prepare(f1, bin_width, st1);
    const EmpiricalPdf& p2 = prepare(f2, bin_width, st2);
    require_common_grid(p1, p2);

    const double w = p1.bin_width();
    const auto len1 = static_cast<long>(p1.size());
    const auto len2 = static_cast<long>(p2.size());
    const auto y1 = obs.y1_current();
    const auto y2 = obs.y2_current();

    // delta_j = (min y1 - origin1) - j*w; the forward likelihood factor of
    // pair i lives at bin off1[i] + j and the reverse factor at
    // off2[i] - j, so the feasible grid is the intersection of the
    // per-pair index windows.
    const double anchor = *std::min_element(y1.begin(), y1.end());
    const double y1max = *std::max_element(y1.begin(), y1.end());
    const double y2min = *std::min_element(y2.begin(), y2.end());
    const double y2max = *std::max_element(y2.begin(), y2.end());

    const double cont_lo = std::max(y1max - p1.support_hi(), p2.support_lo() - y2min);
    const double cont_hi = std::min(anchor - p1.support_lo(), p2.support_hi() - y2max);
    if (cont_hi < cont_lo) {
        throw EmptyPosteriorError("empty posterior: observations inconsistent with pdf supports");
    }

    std::vector<long> off1(y1.size()), off2(y2.size());
    long max1 = 0;
    long min2 = std::numeric_limits<long>::max();
    long max2 = std::numeric_limits<long>::min();
    for (std::size_t i = 0; i < y1.size(); ++i) {
        off1[i] = lattice_floor((y1[i] - anchor) / w);
        max1 = std::max(max1, off1[i]);
        off2[i] = lattice_floor((y2[i] + anchor - p1.origin() - p2.origin()) / w);
        min2 = std::min(min2, off2[i]);
        max2 = std::max(max2, off2[i]);
    }
    const long j_lo = std::max<long>(0, max2 - (len2 - 1));
    const long j_hi = std::min(len1 - 1 - max1, min2);

    EstimateReport rep;
    rep.estimator_id = "minimax-k";

    double m = kNegInf;
    std::vector<double> lw;
    if (j_hi >= j_lo) {
        const auto& ld1 = p1.log_densities();
        const auto& ld2 = p2.log_densities();
        lw.assign(static_cast<std::size_t>(j_hi - j_lo + 1), 0.0);
        for (long j = j_lo; j <= j_hi; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < off1.size(); ++i) {
                const double a = ld1[static_cast<std::size_t>(off1[i] + j)];
                const double b = ld2[static_cast<std::size_t>(off2[i] - j)];
                if (a == kNegInf || b == kNegInf) {
                    acc = kNegInf;
                    break;
                }
                acc += a + b;
            }
            lw[static_cast<std::size_t>(j - j_lo)] = acc;
            m = std::max(m, acc);
        }
    }
    if (m == kNegInf) {
        const double mid = 0.5 * (cont_lo + cont_hi);
        double peak = 0.0;
        for (std::size_t i = 0; i < y1.size(); ++i) {
            peak += p1.log_density(y1[i] - mid) + p2.log_density(y2[i] + mid);
        }
        if (peak == kNegInf) {
            throw EmptyPosteriorError("empty posterior: no point has positive likelihood");
        }
        rep.estimate = mid;
        rep.grid_bins_used = 1;
        rep.log_normalizer = peak + std::log(std::max(cont_hi - cont_lo, w * 1e-12));
        return rep;
    }

    double s0 = 0.0, s1 = 0.0;
    for (long j = j_lo; j <= j_hi; ++j) {
        const double weight = std::exp(lw[static_cast<std::size_t>(j - j_lo)] - m);
        s0 += weight;
        s1 += weight * static_cast<double>(j);
    }

    rep.estimate = (anchor - p1.origin()) - w * (s1 / s0);
    rep.grid_bins_used = static_cast<std::size_t>(j_hi - j_lo + 1);
    rep.log_normalizer = m + std::log(s0) + std::log(w);
    return rep;
}

EstimateReport minimax_s(const ObservationSet& obs, const EmpiricalPdf& f1,
                         const EmpiricalPdf& f2, double bin_width) {
    obs.validate();
    if (obs.kind.variant != ModelVariant::S) {
        throw std::invalid_argument("minimax_s expects S-model observations");
    }
    std::optional<EmpiricalPdf> st1, st2;
    const EmpiricalPdf& p1 = prepare(f1, bin_width, st1);
    const EmpiricalPdf& p2 = prepare(f2, bin_width, st2);
    require_common_grid(p1, p2);

    // Two independent scalar location estimates, combined; the couplings
    // cancel because the target is half their difference.
    const ScalarPosterior fwd = pitman_posterior(obs.y1_current(), p1);
    const ScalarPosterior rev = pitman_posterior(obs.y2_current(), p2);

    EstimateReport rep;
    rep.estimate = 0.5 * (fwd.estimate - rev.estimate);
    rep.estimator_id = "minimax-s";
    rep.grid_bins_used = fwd.bins + rev.bins;
    rep.log_normalizer = fwd.log_normalizer + rev.log_normalizer;
    return rep;
}

namespace {

// Per-block lattice windows for the multiblock estimator. With
// d + delta = S + alpha*w and d - delta = R + beta*w, the forward factor
// of pair i in block b sits at bin A[b][i] - alpha and the reverse factor
// at B[b][i] - beta, so each block's likelihood factors into
// F_b(alpha) * G_b(beta).
struct BlockGrid {
    long a_lo = 0, a_hi = 0;
    long b_lo = 0, b_hi = 0;
    std::vector<double> log_f, log_g;  // indexed from a_lo / b_lo
    std::vector<double> f_scaled, g_scaled;
    double max_f = kNegInf, max_g = kNegInf;

    double lf(long a) const { return log_f[static_cast<std::size_t>(a - a_lo)]; }
    double lg(long b) const { return log_g[static_cast<std::size_t>(b - b_lo)]; }
    double fs(long a) const { return f_scaled[static_cast<std::size_t>(a - a_lo)]; }
    double gs(long b) const { return g_scaled[static_cast<std::size_t>(b - b_lo)]; }
};

std::vector<double> profile_logs(std::span<const long> offsets,
                                 const std::vector<double>& ld, long lo, long hi) {
    std::vector<double> out(static_cast<std::size_t>(hi - lo + 1), 0.0);
    for (long a = lo; a <= hi; ++a) {
        double acc = 0.0;
        for (long o : offsets) {
            const double v = ld[static_cast<std::size_t>(o - a)];
            if (v == kNegInf) {
                acc = kNegInf;
                break;
            }
            acc += v;
        }
        out[static_cast<std::size_t>(a - lo)] = acc;
    }
    return out;
}

// Sub-bin fallback for the multiblock model: the feasible (d, delta)
// region misses every lattice point, so place d at the midpoint of the
// intersected per-block d intervals and return the midpoint of the
// current block's delta interval there.
EstimateReport m_continuum_fallback(const ObservationSet& obs, const EmpiricalPdf& p1,
                                    const EmpiricalPdf& p2) {
    double d_lo = -std::numeric_limits<double>::infinity();
    double d_hi = std::numeric_limits<double>::infinity();
    for (int b = 0; b <= obs.kind.blocks; ++b) {
        const auto yb1 = obs.y1_block(b);
        const auto yb2 = obs.y2_block(b);
        const double y1min = *std::min_element(yb1.begin(), yb1.end());
        const double y1max = *std::max_element(yb1.begin(), yb1.end());
        const double y2min = *std::min_element(yb2.begin(), yb2.end());
        const double y2max = *std::max_element(yb2.begin(), yb2.end());
        d_lo = std::max(d_lo, 0.5 * (y1max + y2max - p1.support_hi() - p2.support_hi()));
        d_hi = std::min(d_hi, 0.5 * (y1min + y2min - p1.support_lo() - p2.support_lo()));
    }
    if (d_hi < d_lo) {
        throw EmptyPosteriorError("empty posterior: blocks admit no common fixed delay");
    }
    const double d_star = 0.5 * (d_lo + d_hi);

    const auto y1c = obs.y1_current();
    const auto y2c = obs.y2_current();
    const double y1min = *std::min_element(y1c.begin(), y1c.end());
    const double y1max = *std::max_element(y1c.begin(), y1c.end());
    const double y2min = *std::min_element(y2c.begin(), y2c.end());
    const double y2max = *std::max_element(y2c.begin(), y2c.end());
    const double t_lo =
        std::max(y1max - d_star - p1.support_hi(), p2.support_lo() - y2min + d_star);
    const double t_hi =
        std::min(y1min - d_star - p1.support_lo(), p2.support_hi() - y2max + d_star);
    if (t_hi < t_lo) {
        throw EmptyPosteriorError("empty posterior: current block admits no phase offset");
    }

    EstimateReport rep;
    rep.estimator_id = "minimax-m";
    rep.estimate = 0.5 * (t_lo + t_hi);
    rep.grid_bins_used = 1;
    double peak = 0.0;
    for (std::size_t i = 0; i < y1c.size(); ++i) {
        peak += p1.log_density(y1c[i] - d_star - rep.estimate) +
                p2.log_density(y2c[i] - d_star + rep.estimate);
    }
    rep.log_normalizer =
        peak + std::log(std::max(t_hi - t_lo, p1.bin_width() * 1e-12)) +
        std::log(std::max(d_hi - d_lo, p1.bin_width() * 1e-12));
    return rep;
}

}  // namespace

EstimateReport minimax_m(const ObservationSet& obs, const EmpiricalPdf& f1,
                         const EmpiricalPdf& f2, double bin_width) {
    obs.validate();
    if (obs.kind.variant != ModelVariant::M) {
        throw std::invalid_argument("minimax_m expects M-model observations");
    }
    std::optional<EmpiricalPdf> st1, st2;
    const EmpiricalPdf& p1 = prepare(f1, bin_width, st1);
    const EmpiricalPdf& p2 = prepare(f2, bin_width, st2);
    require_common_grid(p1, p2);

    const double w = p1.bin_width();
    const auto len1 = static_cast<long>(p1.size());
    const auto len2 = static_cast<long>(p2.size());
    const int nblocks = obs.kind.blocks + 1;  // current + past
    const double log_w = std::log(w);

    const double y1ref = *std::min_element(obs.y1.begin(), obs.y1.end());
    const double y2ref = *std::min_element(obs.y2.begin(), obs.y2.end());

    // The d grid is the intersection of the per-block feasible d
    // intervals: block b admits d iff its forward window (on
    // alpha = (d + delta - S)/w) and reverse window (on
    // beta = (d - delta - R)/w) overlap at some delta, which in lattice
    // coordinates is u = (alpha + beta) / 2 landing in the summed window.
    std::vector<BlockGrid> blocks(static_cast<std::size_t>(nblocks));
    long u_lo = std::numeric_limits<long>::min();
    long u_hi = std::numeric_limits<long>::max();
    for (int b = 0; b < nblocks; ++b) {
        const auto yb1 = obs.y1_block(b);
        const auto yb2 = obs.y2_block(b);
        std::vector<long> a_off(yb1.size()), b_off(yb2.size());
        long a_min = std::numeric_limits<long>::max(), a_max = std::numeric_limits<long>::min();
        long b_min = a_min, b_max = a_max;
        for (std::size_t i = 0; i < yb1.size(); ++i) {
            a_off[i] = lattice_floor((yb1[i] - y1ref) / w);
            a_min = std::min(a_min, a_off[i]);
            a_max = std::max(a_max, a_off[i]);
            b_off[i] = lattice_floor((yb2[i] - y2ref) / w);
            b_min = std::min(b_min, b_off[i]);
            b_max = std::max(b_max, b_off[i]);
        }
        BlockGrid& g = blocks[static_cast<std::size_t>(b)];
        g.a_lo = a_max - (len1 - 1);
        g.a_hi = a_min;
        g.b_lo = b_max - (len2 - 1);
        g.b_hi = b_min;
        if (g.a_hi < g.a_lo || g.b_hi < g.b_lo) {
            return m_continuum_fallback(obs, p1, p2);
        }
        g.log_f = profile_logs(a_off, p1.log_densities(), g.a_lo, g.a_hi);
        g.log_g = profile_logs(b_off, p2.log_densities(), g.b_lo, g.b_hi);
        for (double v : g.log_f) g.max_f = std::max(g.max_f, v);
        for (double v : g.log_g) g.max_g = std::max(g.max_g, v);
        if (g.max_f == kNegInf || g.max_g == kNegInf) {
            return m_continuum_fallback(obs, p1, p2);
        }
        g.f_scaled.resize(g.log_f.size());
        g.g_scaled.resize(g.log_g.size());
        for (std::size_t i = 0; i < g.log_f.size(); ++i) {
            g.f_scaled[i] = g.log_f[i] == kNegInf ? 0.0 : std::exp(g.log_f[i] - g.max_f);
        }
        for (std::size_t i = 0; i < g.log_g.size(); ++i) {
            g.g_scaled[i] = g.log_g[i] == kNegInf ? 0.0 : std::exp(g.log_g[i] - g.max_g);
        }
        // ceil / floor of half-integer sums
        const long lo2 = g.a_lo + g.b_lo, hi2 = g.a_hi + g.b_hi;
        u_lo = std::max(u_lo, lo2 >= 0 ? (lo2 + 1) / 2 : -((-lo2) / 2));
        u_hi = std::min(u_hi, hi2 >= 0 ? hi2 / 2 : -((-hi2 + 1) / 2));
    }
    if (u_hi < u_lo) {
        return m_continuum_fallback(obs, p1, p2);
    }

    // log Omega(d): sum over past blocks of the log-integral over that
    // block's phase offset.
    const auto n_u = static_cast<std::size_t>(u_hi - u_lo + 1);
    std::vector<double> log_omega(n_u, 0.0);
    for (std::size_t ui = 0; ui < n_u; ++ui) {
        const long u = u_lo + static_cast<long>(ui);
        double acc = 0.0;
        for (int b = 1; b < nblocks; ++b) {
            const BlockGrid& g = blocks[static_cast<std::size_t>(b)];
            const long t1 = std::max(g.a_lo - u, u - g.b_hi);
            const long t2 = std::min(g.a_hi - u, u - g.b_lo);
            double s = 0.0;
            for (long t = t1; t <= t2; ++t) {
                s += g.fs(u + t) * g.gs(u - t);
            }
            if (s <= 0.0) {
                acc = kNegInf;
                break;
            }
            acc += g.max_f + g.max_g + std::log(s) + log_w;
        }
        log_omega[ui] = acc;
    }
    double max_omega = kNegInf;
    for (double v : log_omega) max_omega = std::max(max_omega, v);

    const BlockGrid& cur = blocks[0];
    const double s_anchor = y1ref - p1.origin();
    const double r_anchor = y2ref - p2.origin();

    EstimateReport rep;
    rep.estimator_id = "minimax-m";

    if (max_omega != kNegInf) {
        std::vector<double> omega_scaled(n_u);
        for (std::size_t ui = 0; ui < n_u; ++ui) {
            omega_scaled[ui] =
                log_omega[ui] == kNegInf ? 0.0 : std::exp(log_omega[ui] - max_omega);
        }

        const long t_lo = std::max(cur.a_lo - u_hi, u_lo - cur.b_hi);
        const long t_hi = std::min(cur.a_hi - u_lo, u_hi - cur.b_lo);
        if (t_lo > t_hi) {
            return m_continuum_fallback(obs, p1, p2);
        }
        std::vector<double> gamma(static_cast<std::size_t>(t_hi - t_lo + 1), 0.0);
        std::size_t cells = 0;
        for (std::size_t ui = 0; ui < n_u; ++ui) {
            const double wu = omega_scaled[ui];
            if (wu == 0.0) continue;
            const long u = u_lo + static_cast<long>(ui);
            const long t1 = std::max(cur.a_lo - u, u - cur.b_hi);
            const long t2 = std::min(cur.a_hi - u, u - cur.b_lo);
            for (long t = t1; t <= t2; ++t) {
                gamma[static_cast<std::size_t>(t - t_lo)] += cur.fs(u + t) * cur.gs(u - t) * wu;
            }
            if (t2 >= t1) cells += static_cast<std::size_t>(t2 - t1 + 1);
        }
        double total = 0.0, first = 0.0;
        for (std::size_t ti = 0; ti < gamma.size(); ++ti) {
            total += gamma[ti];
            first += gamma[ti] * static_cast<double>(t_lo + static_cast<long>(ti));
        }
        if (total > 0.0) {
            rep.estimate = 0.5 * (s_anchor - r_anchor) + w * (first / total);
            rep.grid_bins_used = cells;
            rep.log_normalizer =
                max_omega + cur.max_f + cur.max_g + std::log(total) + 2.0 * log_w;
            return rep;
        }
    }

    // Exact log-domain fallback for the rare case where the scaled fast
    // path underflows to zero despite a non-empty posterior.
    std::vector<double> log_omega_exact(n_u, 0.0);
    for (std::size_t ui = 0; ui < n_u; ++ui) {
        const long u = u_lo + static_cast<long>(ui);
        double acc = 0.0;
        for (int b = 1; b < nblocks; ++b) {
            const BlockGrid& g = blocks[static_cast<std::size_t>(b)];
            const long t1 = std::max(g.a_lo - u, u - g.b_hi);
            const long t2 = std::min(g.a_hi - u, u - g.b_lo);
            double mx = kNegInf;
            for (long t = t1; t <= t2; ++t) {
                const double lf = g.lf(u + t), lg = g.lg(u - t);
                if (lf != kNegInf && lg != kNegInf) mx = std::max(mx, lf + lg);
            }
            if (mx == kNegInf) {
                acc = kNegInf;
                break;
            }
            double s = 0.0;
            for (long t = t1; t <= t2; ++t) {
                const double lf = g.lf(u + t), lg = g.lg(u - t);
                if (lf != kNegInf && lg != kNegInf) s += std::exp(lf + lg - mx);
            }
            acc += mx + std::log(s) + log_w;
        }
        log_omega_exact[ui] = acc;
    }

    double peak = kNegInf;
    for (std::size_t ui = 0; ui < n_u; ++ui) {
        if (log_omega_exact[ui] == kNegInf) continue;
        const long u = u_lo + static_cast<long>(ui);
        const long t1 = std::max(cur.a_lo - u, u - cur.b_hi);
        const long t2 = std::min(cur.a_hi - u, u - cur.b_lo);
        for (long t = t1; t <= t2; ++t) {
            const double lf = cur.lf(u + t), lg = cur.lg(u - t);
            if (lf != kNegInf && lg != kNegInf) {
                peak = std::max(peak, lf + lg + log_omega_exact[ui]);
            }
        }
    }
    if (peak == kNegInf) {
        return m_continuum_fallback(obs, p1, p2);
    }
    double total = 0.0, first = 0.0;
    std::size_t cells = 0;
    for (std::size_t ui = 0; ui < n_u; ++ui) {
        if (log_omega_exact[ui] == kNegInf) continue;
        const long u = u_lo + static_cast<long>(ui);
        const long t1 = std::max(cur.a_lo - u, u - cur.b_hi);
        const long t2 = std::min(cur.a_hi - u, u - cur.b_lo);
        for (long t = t1; t <= t2; ++t) {
            const double lf = cur.lf(u + t), lg = cur.lg(u - t);
            if (lf == kNegInf || lg == kNegInf) continue;
            const double v = std::exp(lf + lg + log_omega_exact[ui] - peak);
            total += v;
            first += v * static_cast<double>(t);
            ++cells;
        }
    }
    rep.estimate = 0.5 * (s_anchor - r_anchor) + w * (first / total);
    rep.grid_bins_used = cells;
    rep.log_normalizer = peak + std::log(total) + 2.0 * log_w;
    return rep;
}

EstimateReport minimax(const ObservationSet& obs, const EmpiricalPdf& f1,
                       const EmpiricalPdf& f2, double bin_width) {
    switch (obs.kind.variant) {
        case ModelVariant::K: return minimax_k(obs, f1, f2, bin_width);
        case ModelVariant::S: return minimax_s(obs, f1, f2, bin_width);
        case ModelVariant::M: return minimax_m(obs, f1, f2, bin_width);
    }
    throw std::invalid_argument("unknown model variant");
}

void write_report_csv(const EstimateReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "estimate_us,estimator_id,grid_bins_used,log_normalizer\n";
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%.17g,%s,%zu,%.17g\n", report.estimate * 1e6,
                  report.estimator_id.c_str(), report.grid_bins_used,
                  report.log_normalizer);
    out << buf;
}

}  // namespace ptpmx
