#include "ptpmx/empirical_pdf.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace ptpmx {

namespace {

constexpr double kNormTol = 1e-9;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

constexpr double kMicro = 1e-6;  // CSV files carry microseconds

}  // namespace

Histogram Histogram::from_samples(std::span<const double> samples, double bin_width) {
    if (samples.empty()) throw std::invalid_argument("no samples");
    if (bin_width <= 0.0) throw std::invalid_argument("bin width must be positive");

    double lo = samples[0], hi = samples[0];
    for (double s : samples) {
        if (s < 0.0) throw std::invalid_argument("negative delay");
        lo = std::min(lo, s);
        hi = std::max(hi, s);
    }

    Histogram h;
    h.bin_width = bin_width;
    h.origin = std::floor(lo / bin_width) * bin_width;
    const auto nbins =
        static_cast<std::size_t>(std::floor((hi - h.origin) / bin_width)) + 1;
    h.counts.assign(nbins, 0);
    for (double s : samples) {
        auto idx = static_cast<std::size_t>(
            std::max(0.0, std::floor((s - h.origin) / bin_width)));
        idx = std::min(idx, nbins - 1);
        ++h.counts[idx];
    }
    h.total = samples.size();
    return h;
}

double normalization_defect(double bin_width, std::span<const double> densities) {
    double sum = 0.0;
    for (double d : densities) sum += d;
    return std::abs(bin_width * sum - 1.0);
}

EmpiricalPdf::EmpiricalPdf(double bin_width, double origin, std::vector<double> densities)
    : bin_width_(bin_width), origin_(origin), densities_(std::move(densities)) {
    if (bin_width_ <= 0.0) throw std::invalid_argument("bin width must be positive");
    if (origin_ < 0.0) throw std::invalid_argument("pdf origin must be non-negative");
    if (densities_.empty()) throw std::invalid_argument("pdf has no bins");
    for (double d : densities_) {
        if (!(d >= 0.0)) throw std::invalid_argument("pdf density must be non-negative");
    }

    // Finite support is a correctness requirement: trim bins that are
    // exactly zero at either end (no epsilon threshold).
    std::size_t first = 0;
    while (first < densities_.size() && densities_[first] == 0.0) ++first;
    if (first == densities_.size()) throw std::invalid_argument("pdf is identically zero");
    std::size_t last = densities_.size() - 1;
    while (densities_[last] == 0.0) --last;
    if (first > 0 || last + 1 < densities_.size()) {
        origin_ += static_cast<double>(first) * bin_width_;
        densities_.assign(densities_.begin() + static_cast<std::ptrdiff_t>(first),
                          densities_.begin() + static_cast<std::ptrdiff_t>(last + 1));
    }

    if (normalization_defect(bin_width_, densities_) > kNormTol) {
        throw std::invalid_argument("pdf not normalized: bin_width * sum(densities) != 1");
    }

    log_densities_.resize(densities_.size());
    cumulative_mass_.resize(densities_.size());
    double cum = 0.0;
    for (std::size_t i = 0; i < densities_.size(); ++i) {
        log_densities_[i] = densities_[i] > 0.0 ? std::log(densities_[i]) : kNegInf;
        cum += densities_[i] * bin_width_;
        cumulative_mass_[i] = cum;
    }
    cumulative_mass_.back() = 1.0;
}

EmpiricalPdf EmpiricalPdf::from_histogram(const Histogram& h) {
    if (h.total == 0) throw std::invalid_argument("no samples");
    std::vector<double> dens(h.counts.size());
    const double scale = 1.0 / (static_cast<double>(h.total) * h.bin_width);
    for (std::size_t i = 0; i < h.counts.size(); ++i) {
        dens[i] = static_cast<double>(h.counts[i]) * scale;
    }
    return EmpiricalPdf(h.bin_width, h.origin, std::move(dens));
}

EmpiricalPdf EmpiricalPdf::from_samples(std::span<const double> samples, double bin_width) {
    return from_histogram(Histogram::from_samples(samples, bin_width));
}

EmpiricalPdf EmpiricalPdf::point_mass(double at, double bin_width) {
    return EmpiricalPdf(bin_width, at, {1.0 / bin_width});
}

EmpiricalPdf EmpiricalPdf::uniform(double lo, double hi, double bin_width) {
    if (hi <= lo) throw std::invalid_argument("uniform pdf needs hi > lo");
    const auto n = static_cast<std::size_t>(std::llround((hi - lo) / bin_width));
    if (n == 0 || std::abs(lo + static_cast<double>(n) * bin_width - hi) > 1e-9 * bin_width) {
        throw std::invalid_argument("uniform pdf range must be a multiple of the bin width");
    }
    std::vector<double> dens(n, 1.0 / (hi - lo));
    return EmpiricalPdf(bin_width, lo, std::move(dens));
}

double EmpiricalPdf::log_density(double x) const {
    const double pos = (x - origin_) / bin_width_;
    if (pos < 0.0 || pos >= static_cast<double>(size())) return kNegInf;
    return log_densities_[static_cast<std::size_t>(pos)];
}

double EmpiricalPdf::density(double x) const {
    const double pos = (x - origin_) / bin_width_;
    if (pos < 0.0 || pos >= static_cast<double>(size())) return 0.0;
    return densities_[static_cast<std::size_t>(pos)];
}

double EmpiricalPdf::mean() const {
    double m = 0.0;
    for (std::size_t i = 0; i < densities_.size(); ++i) {
        m += densities_[i] * (static_cast<double>(i) + 0.5);
    }
    return origin_ + bin_width_ * bin_width_ * m;
}

double EmpiricalPdf::variance() const {
    const double mu = mean();
    double v = 0.0;
    for (std::size_t i = 0; i < densities_.size(); ++i) {
        const double c = origin_ + bin_width_ * (static_cast<double>(i) + 0.5);
        v += densities_[i] * bin_width_ * (c - mu) * (c - mu);
    }
    // within-bin uniform jitter adds w^2/12 per bin
    return v + bin_width_ * bin_width_ / 12.0;
}

double EmpiricalPdf::sample(Rng& rng) const {
    const double u = rng.uniform01();
    const auto it =
        std::upper_bound(cumulative_mass_.begin(), cumulative_mass_.end(), u);
    const auto idx = std::min<std::size_t>(
        static_cast<std::size_t>(it - cumulative_mass_.begin()), size() - 1);
    return origin_ + (static_cast<double>(idx) + rng.uniform01()) * bin_width_;
}

EmpiricalPdf EmpiricalPdf::rebin(double new_bin_width) const {
    const double ratio = new_bin_width / bin_width_;
    const auto k = static_cast<std::size_t>(std::llround(ratio));
    if (k < 1 || std::abs(ratio - static_cast<double>(k)) > 1e-9) {
        throw std::invalid_argument("rebin width must be an integer multiple of the bin width");
    }
    if (k == 1) return *this;
    std::vector<double> dens((size() + k - 1) / k, 0.0);
    for (std::size_t i = 0; i < size(); ++i) {
        dens[i / k] += densities_[i] * bin_width_;  // accumulate mass
    }
    double mass = 0.0;
    for (double& d : dens) mass += d;
    for (double& d : dens) d /= mass * new_bin_width;
    return EmpiricalPdf(new_bin_width, origin_, std::move(dens));
}

EmpiricalPdf convolve(const EmpiricalPdf& a, const EmpiricalPdf& b) {
    if (a.bin_width() != b.bin_width()) {
        throw std::invalid_argument("convolve: bin widths differ");
    }
    const auto& da = a.densities();
    const auto& db = b.densities();
    const double w = a.bin_width();

    std::vector<double> mass(da.size() + db.size() - 1, 0.0);
    for (std::size_t i = 0; i < da.size(); ++i) {
        const double ma = da[i] * w;
        if (ma == 0.0) continue;
        for (std::size_t j = 0; j < db.size(); ++j) {
            mass[i + j] += ma * db[j] * w;
        }
    }
    double total = 0.0;
    for (double m : mass) total += m;
    for (double& m : mass) m /= total * w;
    return EmpiricalPdf(w, a.origin() + b.origin(), std::move(mass));
}

EmpiricalPdf self_convolve(const EmpiricalPdf& a, int n) {
    if (n < 1) throw std::invalid_argument("self_convolve needs n >= 1");
    EmpiricalPdf out = a;
    for (int i = 1; i < n; ++i) out = convolve(out, a);
    return out;
}

void write_pdf_csv(const EmpiricalPdf& pdf, std::ostream& out) {
    out << "bin_width_us," << format_scaled(pdf.bin_width(), 6) << "\n";
    out << "origin_us," << format_scaled(pdf.origin(), 6) << "\n";
    out << "density_per_us\n";
    for (double d : pdf.densities()) {
        out << format_scaled(d, -6) << "\n";
    }
}

void write_pdf_csv(const EmpiricalPdf& pdf, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    write_pdf_csv(pdf, f);
}

EmpiricalPdf read_pdf_csv(std::istream& in) {
    std::string line;
    double bin_width_us = 0.0, origin_us = 0.0;

    if (!std::getline(in, line) || line.rfind("bin_width_us,", 0) != 0) {
        throw std::runtime_error("pdf csv: expected bin_width_us header");
    }
    bin_width_us = std::stod(line.substr(13));
    if (!std::getline(in, line) || line.rfind("origin_us,", 0) != 0) {
        throw std::runtime_error("pdf csv: expected origin_us header");
    }
    origin_us = std::stod(line.substr(10));

    std::vector<double> dens;
    while (std::getline(in, line)) {
        if (line.empty() || line == "density_per_us") continue;
        dens.push_back(std::stod(line) / kMicro);
    }
    return EmpiricalPdf(bin_width_us * kMicro, origin_us * kMicro, std::move(dens));
}

EmpiricalPdf read_pdf_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open pdf csv: " + path);
    return read_pdf_csv(f);
}

}  // namespace ptpmx
