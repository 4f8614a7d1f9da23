#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "ptpmx/empirical_pdf.hpp"
#include "ptpmx/queue_sim.hpp"
#include "ptpmx/rng.hpp"

using namespace ptpmx;

namespace {

constexpr double kGbps = 1e9;

TrafficScenario cross_scenario(int switches, double load, PacketSizeModel model) {
    TrafficScenario sc;
    sc.link_rate_bps = kGbps;
    sc.num_switches = switches;
    sc.flow = FlowType::Cross;
    sc.forward.cross_load = load;
    sc.forward.cross_model = std::move(model);
    sc.reverse = sc.forward;
    return sc;
}

// Pollaczek-Khinchine mean wait for Poisson arrivals at a single queue.
double pk_mean_wait(double load, const PacketSizeModel& model) {
    const double es = model.mean_bytes() * 8.0 / kGbps;
    const double es2 = model.mean_square_bytes() * 64.0 / (kGbps * kGbps);
    const double lambda = load / es;
    return lambda * es2 / (2.0 * (1.0 - load));
}

double ks_vs_pdf(std::vector<double> samples, const EmpiricalPdf& pdf) {
    std::sort(samples.begin(), samples.end());
    const auto n = static_cast<double>(samples.size());
    // compare the empirical cdf against the pdf's piecewise cdf at bin edges
    double worst = 0.0;
    double cum = 0.0;
    for (std::size_t b = 0; b <= pdf.size(); ++b) {
        const double edge = pdf.origin() + static_cast<double>(b) * pdf.bin_width();
        const auto below = std::lower_bound(samples.begin(), samples.end(), edge);
        const double ecdf = static_cast<double>(below - samples.begin()) / n;
        worst = std::max(worst, std::abs(ecdf - cum));
        if (b < pdf.size()) cum += pdf.densities()[b] * pdf.bin_width();
    }
    return worst;
}

}  // namespace

TEST_SUITE("queue-sim") {

TEST_CASE("packet size models carry the standard mixes") {
    const PacketSizeModel tm1 = PacketSizeModel::tm1();
    CHECK(tm1.mean_bytes() == doctest::Approx(307.7));
    const PacketSizeModel tm2 = PacketSizeModel::tm2();
    CHECK(tm2.mean_bytes() == doctest::Approx(0.3 * 64 + 0.1 * 576 + 0.6 * 1518));
    const PacketSizeModel uni = PacketSizeModel::uniform_inline();
    CHECK(uni.mean_bytes() == doctest::Approx(782.0));
}

TEST_CASE("load_to_arrival_rate derives the Poisson rate from the mix") {
    // oracle: mean TM1 size = 0.8*64 + 0.05*576 + 0.15*1518 = 307.7 bytes
    const double expect = 0.2 * kGbps / (307.7 * 8.0);
    CHECK(load_to_arrival_rate(0.2, kGbps, PacketSizeModel::tm1()) ==
          doctest::Approx(expect).epsilon(1e-12));
    CHECK(expect == doctest::Approx(81248.0).epsilon(1e-4));

    CHECK(load_to_arrival_rate(0.5, kGbps, PacketSizeModel::point_mass(125.0)) ==
          doctest::Approx(500000.0));

    // vanishing load gives a vanishing rate
    CHECK(load_to_arrival_rate(1e-9, kGbps, PacketSizeModel::tm1()) < 1.0);

    CHECK_THROWS_AS(load_to_arrival_rate(0.0, kGbps, PacketSizeModel::tm1()),
                    std::invalid_argument);
    CHECK_THROWS_AS(load_to_arrival_rate(1.0, kGbps, PacketSizeModel::tm1()),
                    std::invalid_argument);
}

TEST_CASE("zero load means zero delay") {
    TrafficScenario sc = cross_scenario(3, 0.0, PacketSizeModel::tm1());
    Rng rng(1);
    const DelayTrace trace = simulate_cascade(sc, Direction::Forward, 500, rng);
    for (double d : trace.ete) CHECK(d == 0.0);
}

TEST_CASE("single-node mean wait matches the M/G/1 oracle") {
    DirectionConfig cfg;
    cfg.cross_load = 0.4;
    cfg.cross_model = PacketSizeModel::tm1();
    Rng rng(2024);
    const std::vector<double> waits = simulate_cross_single_node(cfg, kGbps, 200000, rng);
    double mean = 0.0;
    for (double w : waits) mean += w;
    mean /= static_cast<double>(waits.size());
    const double expect = pk_mean_wait(0.4, cfg.cross_model);
    CHECK(std::abs(mean - expect) / expect <= 0.05);
}

TEST_CASE("same seed reproduces the sample vector") {
    DirectionConfig cfg;
    cfg.cross_load = 0.3;
    cfg.cross_model = PacketSizeModel::tm2();
    Rng a(7), b(7);
    const auto va = simulate_cross_single_node(cfg, kGbps, 2000, a);
    const auto vb = simulate_cross_single_node(cfg, kGbps, 2000, b);
    CHECK(va == vb);
}

TEST_CASE("batched runs are worker-count independent") {
    TrafficScenario sc = cross_scenario(2, 0.3, PacketSizeModel::tm1());
    SimOptions opts;
    opts.batch_probes = 1000;
    const DelayTrace one = simulate_cascade_batched(sc, Direction::Forward, 4000, 99, 1, opts);
    const DelayTrace four = simulate_cascade_batched(sc, Direction::Forward, 4000, 99, 4, opts);
    CHECK(one.ete == four.ete);
    CHECK(one.per_node == four.per_node);
}

TEST_CASE("cascade end-to-end delays match the convolution oracle") {
    // single-node delay pdf, self-convolved, against a 4-node cascade
    TrafficScenario one = cross_scenario(1, 0.4, PacketSizeModel::tm1());
    const EmpiricalPdf single = delay_pdf(one, Direction::Forward, 100000, 0.05e-6, 31, 4);
    const EmpiricalPdf four_oracle = self_convolve(single, 4);

    TrafficScenario four = cross_scenario(4, 0.4, PacketSizeModel::tm1());
    const DelayTrace trace = simulate_cascade_batched(four, Direction::Forward, 20000, 32, 4);

    const double d = ks_vs_pdf(trace.ete, four_oracle);
    const double limit = 2.0 * 1.36 / std::sqrt(20000.0);
    CHECK(d <= limit);
}

TEST_CASE("inline traffic induces positive correlation across nodes") {
    TrafficScenario sc;
    sc.link_rate_bps = kGbps;
    sc.num_switches = 2;
    sc.flow = FlowType::Inline;
    sc.forward.inline_load = 0.5;
    sc.forward.inline_model = PacketSizeModel::uniform_inline();
    sc.reverse = sc.forward;

    Rng rng(5150);
    const DelayTrace trace = simulate_cascade(sc, Direction::Forward, 5000, rng);
    const std::size_t n = trace.num_probes;
    std::vector<double> a(n), b(n);
    for (std::size_t p = 0; p < n; ++p) {
        a[p] = trace.node_delay(p, 0);
        b[p] = trace.node_delay(p, 1);
    }

    auto corr = [&](const std::vector<double>& x, const std::vector<double>& y) {
        double mx = 0.0, my = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            mx += x[i];
            my += y[i];
        }
        mx /= static_cast<double>(x.size());
        my /= static_cast<double>(y.size());
        double sxy = 0.0, sxx = 0.0, syy = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            sxy += (x[i] - mx) * (y[i] - my);
            sxx += (x[i] - mx) * (x[i] - mx);
            syy += (y[i] - my) * (y[i] - my);
        }
        return sxy / std::sqrt(sxx * syy);
    };

    const double observed = corr(a, b);
    CHECK(observed > 0.0);

    // permutation test: shuffling one column should rarely reach the
    // observed correlation
    Rng shuffle_rng(6);
    std::vector<double> shuffled = b;
    int exceed = 0;
    const int perms = 500;
    for (int p = 0; p < perms; ++p) {
        for (std::size_t i = shuffled.size() - 1; i > 0; --i) {
            const auto j = static_cast<std::size_t>(shuffle_rng.uniform01() *
                                                    static_cast<double>(i + 1));
            std::swap(shuffled[i], shuffled[std::min(j, i)]);
        }
        if (std::abs(corr(a, shuffled)) >= observed) ++exceed;
    }
    CHECK(static_cast<double>(exceed) / perms < 0.01);
}

TEST_CASE("delay_pdf composes simulation and binning") {
    TrafficScenario quiet = cross_scenario(2, 0.0, PacketSizeModel::tm1());
    const EmpiricalPdf idle = delay_pdf(quiet, Direction::Forward, 1000, 0.01e-6, 3, 1);
    CHECK(idle.size() == 1);
    CHECK(idle.origin() == doctest::Approx(0.0));

    TrafficScenario busy = cross_scenario(4, 0.4, PacketSizeModel::tm1());
    const DelayTrace trace = simulate_cascade_batched(busy, Direction::Forward, 30000, 8, 4);
    const EmpiricalPdf pdf = EmpiricalPdf::from_samples(trace.ete, 0.01e-6);

    // support starts at zero: idle moments at 40% load leave some probes unqueued
    CHECK(pdf.origin() == doctest::Approx(0.0));

    double mean = 0.0;
    for (double d : trace.ete) mean += d;
    mean /= static_cast<double>(trace.ete.size());
    CHECK(std::abs(pdf.mean() - mean) <= 0.5 * pdf.bin_width());
}

TEST_CASE("unstable load is rejected") {
    TrafficScenario sc = cross_scenario(1, 0.0, PacketSizeModel::tm1());
    sc.forward.cross_load = 1.2;
    Rng rng(1);
    CHECK_THROWS_WITH_AS(simulate_cascade(sc, Direction::Forward, 10, rng),
                         "unstable queue: load >= 1", std::invalid_argument);
}

}  // TEST_SUITE
