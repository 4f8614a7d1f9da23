#include <doctest.h>

#include <cmath>
#include <sstream>

#include "ptpmx/evaluation.hpp"
#include "ptpmx/rng.hpp"

using namespace ptpmx;

namespace {
constexpr double kUs = 1e-6;
}

TEST_SUITE("evaluation") {

TEST_CASE("degenerate delay pdfs drive every estimator's error to zero") {
    // a vanishing bin width makes the point mass effectively exact
    const EmpiricalPdf pm = EmpiricalPdf::point_mass(0.0, 1e-12);
    const std::vector<std::string> all = {"minimax", "min", "max", "mean", "median"};
    for (const ModelKind kind : {ModelKind::k(3), ModelKind::s(3), ModelKind::m(3, 2)}) {
        const auto errs = trial_errors(all, kind, pm, pm, 0.0, 50, 77, nullptr, 1, 2000);
        for (const auto& te : errs) {
            for (double sq : te.sq_err) {
                CHECK(sq <= 1e-23);  // bounded by the within-bin jitter
            }
        }
    }
}

TEST_CASE("mean-filter MSE matches the analytic value for uniform delays") {
    const EmpiricalPdf uni = EmpiricalPdf::uniform(0.0, 1.0 * kUs, 0.01 * kUs);
    const MseResult r =
        mse_at("mean", ModelKind::s(4), uni, uni, 0.0, 2000, 4242, nullptr, 2);
    const double expect = (1.0 / 96.0) * kUs * kUs;  // var(U)/ (2*P) summed halves
    CHECK(std::abs(r.mse - expect) <= r.ci_halfwidth);
}

TEST_CASE("doubling the trial count shrinks the CI accordingly") {
    const EmpiricalPdf uni = EmpiricalPdf::uniform(0.0, 1.0 * kUs, 0.01 * kUs);
    const MseResult small =
        mse_at("mean", ModelKind::s(4), uni, uni, 0.0, 2000, 11, nullptr, 2);
    const MseResult big =
        mse_at("mean", ModelKind::s(4), uni, uni, 0.0, 4000, 12, nullptr, 2);
    const double ratio = big.ci_halfwidth / small.ci_halfwidth;
    CHECK(ratio >= 0.6);
    CHECK(ratio <= 0.8);
}

TEST_CASE("curves serialize deterministically") {
    const EmpiricalPdf uni = EmpiricalPdf::uniform(0.0, 1.0 * kUs, 0.01 * kUs);
    const auto run = [&](int workers) {
        std::ostringstream ss;
        write_curves_csv(curve({"minimax", "min"}, ModelKind::s(0), {1, 4}, uni, uni, 0.0,
                               200, 900, nullptr, workers),
                         ss);
        return ss.str();
    };
    const std::string a = run(1);
    CHECK(a == run(1));
    CHECK(a == run(4));
    CHECK(a.rfind("estimator,model,P,mse_us2,ci_us2,trials,seed\n", 0) == 0);
    CHECK(a.find("minimax,s,4,") != std::string::npos);
}

TEST_CASE("minimax MSE grows at least linearly with cascaded nodes") {
    Rng rng(31);
    std::vector<double> samples(30000);
    for (auto& s : samples) s = rng.exponential(0.4 * kUs);
    const EmpiricalPdf single = EmpiricalPdf::from_samples(samples, 0.01 * kUs);

    const CorollaryReport rep =
        corollary_check(single, single, {2}, 1, 4, 0.0, 1500, 2025, 2);
    REQUIRE(rep.entries.size() == 1);
    CHECK(rep.entries[0].k == 2);
    CHECK(rep.entries[0].holds);
    CHECK(rep.all_hold);
}

TEST_CASE("threshold arithmetic is exact in the report header") {
    PropertyReport rep;
    std::ostringstream ss;
    write_property_report(rep, ss);
    const std::string text = ss.str();
    CHECK(text.find("# std_threshold_us,0.25\n") != std::string::npos);
    CHECK(text.find("# mse_threshold_us2,0.0625\n") != std::string::npos);
}

TEST_CASE("property suite passes on the default seed") {
    const PropertyReport rep = property_suite(7, 4);
    for (const auto& r : rep.results) {
        INFO(r.name, ": ", r.detail);
        CHECK(r.pass);
    }
    CHECK(rep.all_pass());
}

}  // TEST_SUITE
