#include <doctest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "ptpmx/empirical_pdf.hpp"
#include "ptpmx/rng.hpp"

using namespace ptpmx;

namespace {

constexpr double kUs = 1e-6;

// Probability mass of [a, b) under an exponential with the given mean,
// truncated to [0, cut].
double trunc_exp_mass(double a, double b, double mean, double cut) {
    const double z = 1.0 - std::exp(-cut / mean);
    return (std::exp(-a / mean) - std::exp(-b / mean)) / z;
}

}  // namespace

TEST_SUITE("empirical-pdf") {

TEST_CASE("from_samples collapses identical samples to one bin") {
    const std::vector<double> samples = {0.5, 0.5, 0.5};
    const EmpiricalPdf pdf = EmpiricalPdf::from_samples(samples, 1.0);
    CHECK(pdf.size() == 1);
    CHECK(pdf.origin() == doctest::Approx(0.0));
    CHECK(pdf.densities()[0] == doctest::Approx(1.0));
}

TEST_CASE("from_samples splits mass across bins") {
    const std::vector<double> samples = {0.1, 1.1};
    const EmpiricalPdf pdf = EmpiricalPdf::from_samples(samples, 1.0);
    REQUIRE(pdf.size() == 2);
    CHECK(pdf.densities()[0] == doctest::Approx(0.5));
    CHECK(pdf.densities()[1] == doctest::Approx(0.5));
}

TEST_CASE("from_samples matches the truncated-exponential oracle") {
    const double mean = 2.0 * kUs;
    const double cut = 20.0 * kUs;
    const double bin = 0.01 * kUs;
    const std::size_t n = 1000000;

    Rng rng(12345);
    std::vector<double> samples;
    samples.reserve(n);
    while (samples.size() < n) {
        const double d = rng.exponential(mean);
        if (d <= cut) samples.push_back(d);
    }
    const EmpiricalPdf pdf = EmpiricalPdf::from_samples(samples, bin);

    REQUIRE(pdf.origin() == doctest::Approx(0.0));
    for (const std::size_t idx : {std::size_t{0}, std::size_t{50}, std::size_t{400}}) {
        const double a = static_cast<double>(idx) * bin;
        const double p = trunc_exp_mass(a, a + bin, mean, cut);
        const double se = std::sqrt(p * (1.0 - p) / static_cast<double>(n));
        const double expect_density = p / bin;
        const double tol = 3.0 * se / bin;
        CHECK(std::abs(pdf.densities()[idx] - expect_density) <= tol);
    }
    CHECK(normalization_defect(pdf.bin_width(), pdf.densities()) <= 1e-9);
}

TEST_CASE("from_samples rejects bad input") {
    CHECK_THROWS_WITH_AS(EmpiricalPdf::from_samples(std::vector<double>{}, 1.0),
                         "no samples", std::invalid_argument);
    CHECK_THROWS_WITH_AS(EmpiricalPdf::from_samples(std::vector<double>{0.2, -0.1}, 1.0),
                         "negative delay", std::invalid_argument);
}

TEST_CASE("log_density inside, outside and on a uniform pdf") {
    const EmpiricalPdf pm = EmpiricalPdf::point_mass(0.0, 1.0);
    CHECK(pm.log_density(0.5) == doctest::Approx(0.0));
    CHECK(pm.log_density(5.0) == -std::numeric_limits<double>::infinity());

    const EmpiricalPdf uni = EmpiricalPdf::uniform(0.0, 2.0, 0.5);
    CHECK(uni.log_density(1.7) == doctest::Approx(std::log(0.5)));
}

TEST_CASE("convolving with a point mass shifts the pdf") {
    Rng rng(7);
    std::vector<double> samples(5000);
    for (auto& s : samples) s = rng.exponential(1.0);
    const EmpiricalPdf f = EmpiricalPdf::from_samples(samples, 0.01);
    const EmpiricalPdf delta = EmpiricalPdf::point_mass(1.0, 0.01);
    const EmpiricalPdf shifted = convolve(delta, f);

    REQUIRE(shifted.size() == f.size());
    CHECK(shifted.origin() == doctest::Approx(f.origin() + 1.0));
    for (std::size_t i = 0; i < f.size(); ++i) {
        CHECK(shifted.densities()[i] == doctest::Approx(f.densities()[i]).epsilon(1e-12));
    }
}

TEST_CASE("uniform self-convolution approximates the triangle density") {
    const double bin = 0.01;
    const EmpiricalPdf uni = EmpiricalPdf::uniform(0.0, 1.0, bin);
    const EmpiricalPdf tri = convolve(uni, uni);

    double peak = 0.0;
    double worst = 0.0;
    for (std::size_t i = 0; i < tri.size(); ++i) {
        const double x = tri.origin() + (static_cast<double>(i) + 0.5) * bin;
        const double expect = x <= 1.0 ? x : 2.0 - x;
        worst = std::max(worst, std::abs(tri.densities()[i] - expect));
        peak = std::max(peak, tri.densities()[i]);
    }
    CHECK(worst <= bin);
    CHECK(peak == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("self-convolution preserves mean linearity") {
    Rng rng(11);
    std::vector<double> samples(20000);
    for (auto& s : samples) s = rng.exponential(1.5 * kUs);
    const EmpiricalPdf one = EmpiricalPdf::from_samples(samples, 0.01 * kUs);
    const EmpiricalPdf four = self_convolve(one, 4);
    CHECK(four.mean() == doctest::Approx(4.0 * one.mean()).epsilon(1e-9));
}

TEST_CASE("convolve rejects mismatched bin widths") {
    const EmpiricalPdf a = EmpiricalPdf::uniform(0.0, 1.0, 0.01);
    const EmpiricalPdf b = EmpiricalPdf::uniform(0.0, 1.0, 0.02);
    CHECK_THROWS_AS(convolve(a, b), std::invalid_argument);
}

TEST_CASE("sampling stays inside the support") {
    const EmpiricalPdf pm = EmpiricalPdf::point_mass(0.0, 1.0);
    Rng rng(99);
    for (int i = 0; i < 1000; ++i) {
        const double d = pm.sample(rng);
        CHECK(d >= 0.0);
        CHECK(d < 1.0);
    }
}

TEST_CASE("sampling a uniform pdf matches its mean within the CLT bound") {
    const EmpiricalPdf uni = EmpiricalPdf::uniform(0.0, 2.0, 0.01);
    Rng rng(123);
    const std::size_t n = 100000;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += uni.sample(rng);
    const double mean = sum / static_cast<double>(n);
    const double bound = 3.0 * (2.0 / std::sqrt(12.0)) / std::sqrt(static_cast<double>(n));
    CHECK(std::abs(mean - 1.0) <= bound);
}

TEST_CASE("sampling is deterministic for a fixed seed") {
    const EmpiricalPdf uni = EmpiricalPdf::uniform(0.0, 2.0, 0.01);
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) {
        CHECK(uni.sample(a) == uni.sample(b));
    }
}

TEST_CASE("rebin identity, aggregation and error paths") {
    const EmpiricalPdf four = EmpiricalPdf::uniform(0.0, 4.0, 1.0);
    const EmpiricalPdf same = four.rebin(1.0);
    CHECK(same.size() == four.size());
    CHECK(same.densities() == four.densities());

    const EmpiricalPdf two = four.rebin(2.0);
    REQUIRE(two.size() == 2);
    CHECK(two.densities()[0] == doctest::Approx(0.25));
    CHECK(two.densities()[1] == doctest::Approx(0.25));

    CHECK_THROWS_AS(four.rebin(1.5), std::invalid_argument);

    Rng rng(5);
    std::vector<double> samples(20000);
    for (auto& s : samples) s = rng.exponential(3.0);
    const EmpiricalPdf fine = EmpiricalPdf::from_samples(samples, 0.05);
    const EmpiricalPdf coarse = fine.rebin(0.5);
    CHECK(std::abs(coarse.mean() - fine.mean()) <= 0.5 * 10.0 * 0.05 / 2.0);
    CHECK(normalization_defect(coarse.bin_width(), coarse.densities()) <= 1e-9);
}

TEST_CASE("csv round-trip is bit exact") {
    Rng rng(17);
    std::vector<double> samples(5000);
    for (auto& s : samples) s = rng.exponential(2.3 * kUs);
    const EmpiricalPdf pdf = EmpiricalPdf::from_samples(samples, 0.013 * kUs);

    std::stringstream ss;
    write_pdf_csv(pdf, ss);
    const EmpiricalPdf back = read_pdf_csv(ss);

    CHECK(back.bin_width() == pdf.bin_width());
    CHECK(back.origin() == pdf.origin());
    REQUIRE(back.size() == pdf.size());
    for (std::size_t i = 0; i < pdf.size(); ++i) {
        CHECK(back.densities()[i] == pdf.densities()[i]);
    }
}

TEST_CASE("constructor enforces the invariants") {
    CHECK_THROWS_AS(EmpiricalPdf(0.0, 0.0, {1.0}), std::invalid_argument);
    CHECK_THROWS_AS(EmpiricalPdf(1.0, -0.5, {1.0}), std::invalid_argument);
    CHECK_THROWS_AS(EmpiricalPdf(1.0, 0.0, {0.5}), std::invalid_argument);  // not normalized
    CHECK_THROWS_AS(EmpiricalPdf(1.0, 0.0, {-1.0, 2.0}), std::invalid_argument);

    // zero-density edges are trimmed
    const EmpiricalPdf trimmed(1.0, 0.0, {0.0, 0.5, 0.5, 0.0});
    CHECK(trimmed.size() == 2);
    CHECK(trimmed.origin() == doctest::Approx(1.0));
}

}  // TEST_SUITE
