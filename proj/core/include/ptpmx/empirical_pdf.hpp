#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "ptpmx/rng.hpp"

namespace ptpmx {

// Raw sample accumulator; counts per uniform bin before normalization.
struct Histogram {
    double bin_width = 0.0;  // seconds
    double origin = 0.0;     // left edge of first bin, seconds
    std::vector<uint64_t> counts;
    uint64_t total = 0;

    static Histogram from_samples(std::span<const double> samples, double bin_width);
};

// |bin_width * sum(densities) - 1|; zero for a normalized pdf.
double normalization_defect(double bin_width, std::span<const double> densities);

// Finite-support probability density on a uniform grid. Bins are
// half-open [left, right); densities are per-second. Immutable after
// construction and safe to share across threads.
class EmpiricalPdf {
public:
    // Validates: bin_width > 0, origin >= 0, densities non-negative with
    // nonzero first/last entry, normalization within 1e-9.
    EmpiricalPdf(double bin_width, double origin, std::vector<double> densities);

    static EmpiricalPdf from_samples(std::span<const double> samples, double bin_width);
    static EmpiricalPdf from_histogram(const Histogram& h);

    // Point mass occupying the single bin [at, at + bin_width).
    static EmpiricalPdf point_mass(double at, double bin_width);
    static EmpiricalPdf uniform(double lo, double hi, double bin_width);

    double bin_width() const { return bin_width_; }
    double origin() const { return origin_; }
    std::size_t size() const { return densities_.size(); }
    const std::vector<double>& densities() const { return densities_; }
    const std::vector<double>& log_densities() const { return log_densities_; }

    double support_lo() const { return origin_; }
    double support_hi() const { return origin_ + bin_width_ * static_cast<double>(size()); }

    // ln(density of the bin containing x); -inf outside the support or on
    // a zero-density bin.
    double log_density(double x) const;
    double density(double x) const;

    // Mean under the within-bin-uniform convention (bin centers).
    double mean() const;
    double variance() const;

    // One draw: bin chosen by mass, uniform jitter within the bin.
    // Consumes exactly two rng values.
    double sample(Rng& rng) const;

    // Mass-preserving aggregation onto a grid k times coarser.
    EmpiricalPdf rebin(double new_bin_width) const;

private:
    double bin_width_;
    double origin_;
    std::vector<double> densities_;
    std::vector<double> log_densities_;
    std::vector<double> cumulative_mass_;  // inclusive prefix sums, back() == 1
};

// Pdf of the sum of independent draws; bin widths must match.
EmpiricalPdf convolve(const EmpiricalPdf& a, const EmpiricalPdf& b);

// a convolved with itself n times total (n >= 1; n == 1 returns a copy).
EmpiricalPdf self_convolve(const EmpiricalPdf& a, int n);

// CSV persistence: `bin_width_us,<w>` / `origin_us,<o>` / `density_per_us`
// header then one density value per line, all in microseconds, 17
// significant digits so round-trips are bit-exact.
void write_pdf_csv(const EmpiricalPdf& pdf, std::ostream& out);
void write_pdf_csv(const EmpiricalPdf& pdf, const std::string& path);
EmpiricalPdf read_pdf_csv(std::istream& in);
EmpiricalPdf read_pdf_csv(const std::string& path);

}  // namespace ptpmx
