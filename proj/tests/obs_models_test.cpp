#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <vector>

#include "ptpmx/obs_models.hpp"

using namespace ptpmx;

namespace {

constexpr double kUs = 1e-6;

// Replays the generator's draw order to recover the raw delay draws.
struct DrawReplay {
    std::vector<double> w1, w2;

    DrawReplay(const ModelKind& kind, const EmpiricalPdf& f1, const EmpiricalPdf& f2,
               uint64_t seed) {
        Rng rng(seed);
        for (int b = 0; b <= kind.blocks; ++b) {
            for (int i = 0; i < kind.pairs; ++i) {
                w1.push_back(f1.sample(rng));
                w2.push_back(f2.sample(rng));
            }
        }
    }
};

}  // namespace

TEST_SUITE("obs-models") {

TEST_CASE("model kinds validate their shape") {
    CHECK_THROWS_AS(ModelKind::k(0).validate(), std::invalid_argument);
    CHECK_THROWS_AS(ModelKind::m(1, 0).validate(), std::invalid_argument);
    CHECK_THROWS_AS((ModelKind{ModelVariant::S, 2, 1}).validate(), std::invalid_argument);
    CHECK(ModelKind::k(1).param_dim() == 1);
    CHECK(ModelKind::s(4).param_dim() == 2);
    CHECK(ModelKind::m(4, 3).param_dim() == 5);
}

TEST_CASE("generate follows the model equations") {
    const EmpiricalPdf f1 = EmpiricalPdf::uniform(0.0, 1.0 * kUs, 0.01 * kUs);
    const EmpiricalPdf f2 = EmpiricalPdf::uniform(0.0, 0.5 * kUs, 0.01 * kUs);

    SUBCASE("K-model adds +delta forward, -delta reverse") {
        GroundTruth truth;
        truth.delta = 0.25 * kUs;
        Rng rng(100);
        const ObservationSet obs = generate(ModelKind::k(3), truth, f1, f2, rng);
        const DrawReplay replay(ModelKind::k(3), f1, f2, 100);
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(obs.y1[i] == truth.delta + replay.w1[i]);
            CHECK(obs.y2[i] == -truth.delta + replay.w2[i]);
        }
    }

    SUBCASE("S-model adds d+delta and d-delta") {
        GroundTruth truth;
        truth.delta = 1.0 * kUs;
        truth.d = 3.0 * kUs;
        Rng rng(101);
        const ObservationSet obs = generate(ModelKind::s(2), truth, f1, f2, rng);
        const DrawReplay replay(ModelKind::s(2), f1, f2, 101);
        for (std::size_t i = 0; i < 2; ++i) {
            CHECK(obs.y1[i] == truth.d + truth.delta + replay.w1[i]);
            CHECK(obs.y2[i] == truth.d - truth.delta + replay.w2[i]);
        }
    }

    SUBCASE("M-model applies per-block offsets around a common d") {
        GroundTruth truth;
        truth.delta = 0.5 * kUs;
        truth.d = 2.0 * kUs;
        truth.past_deltas = {-0.5 * kUs};
        Rng rng(102);
        const ObservationSet obs = generate(ModelKind::m(1, 1), truth, f1, f2, rng);
        const DrawReplay replay(ModelKind::m(1, 1), f1, f2, 102);
        CHECK(obs.y1_block(0)[0] == truth.d + truth.delta + replay.w1[0]);
        CHECK(obs.y2_block(0)[0] == truth.d - truth.delta + replay.w2[0]);
        CHECK(obs.y1_block(1)[0] == truth.d + truth.past_deltas[0] + replay.w1[1]);
        CHECK(obs.y2_block(1)[0] == truth.d - truth.past_deltas[0] + replay.w2[1]);
    }

    SUBCASE("M-model needs B past deltas") {
        GroundTruth truth;
        Rng rng(103);
        CHECK_THROWS_AS(generate(ModelKind::m(1, 2), truth, f1, f2, rng),
                        std::invalid_argument);
    }
}

TEST_CASE("shift applies the model's structure") {
    ObservationSet k_obs;
    k_obs.kind = ModelKind::k(2);
    k_obs.y1 = {1.0, 2.0};
    k_obs.y2 = {-1.0, 0.5};
    const ObservationSet k_shift = shift(k_obs, std::vector<double>{0.5});
    CHECK(k_shift.y1 == std::vector<double>{1.5, 2.5});
    CHECK(k_shift.y2 == std::vector<double>{-1.5, 0.0});

    ObservationSet s_obs;
    s_obs.kind = ModelKind::s(2);
    s_obs.y1 = {1.0, 2.0};
    s_obs.y2 = {3.0, 4.0};
    const ObservationSet s_shift = shift(s_obs, std::vector<double>{0.25, -0.25});
    CHECK(s_shift.y1 == std::vector<double>{1.25, 2.25});
    CHECK(s_shift.y2 == std::vector<double>{2.75, 3.75});

    ObservationSet m_obs;
    m_obs.kind = ModelKind::m(1, 2);
    m_obs.y1 = {1.0, 2.0, 3.0};
    m_obs.y2 = {0.0, 0.0, 0.0};
    const ObservationSet m_shift = shift(m_obs, std::vector<double>{1.0, 0.5, -0.5, 0.25});
    CHECK(m_shift.y1 == std::vector<double>{2.5, 2.5, 4.25});
    CHECK(m_shift.y2 == std::vector<double>{0.5, 1.5, 0.75});

    CHECK_THROWS_AS(shift(m_obs, std::vector<double>{1.0}), std::invalid_argument);
}

TEST_CASE("target_offset selects the phase component") {
    CHECK(target_offset(ModelKind::s(1), std::vector<double>{4.0, 2.0}) ==
          doctest::Approx(1.0));
    CHECK(target_offset(ModelKind::m(1, 2), std::vector<double>{9.0, 0.7, 1.0, 2.0}) ==
          doctest::Approx(0.7));
    CHECK(target_offset(ModelKind::k(1), std::vector<double>{0.7}) == doctest::Approx(0.7));
    CHECK_THROWS_AS(target_offset(ModelKind::k(1), std::vector<double>{1.0, 2.0}),
                    std::invalid_argument);
}

TEST_CASE("observation csv round-trips") {
    const EmpiricalPdf f = EmpiricalPdf::uniform(0.0, 1.0 * kUs, 0.01 * kUs);
    GroundTruth truth;
    truth.delta = 0.3 * kUs;
    truth.d = 1.7 * kUs;
    truth.past_deltas = {0.1 * kUs, -0.2 * kUs};
    Rng rng(200);
    const ObservationSet obs = generate(ModelKind::m(3, 2), truth, f, f, rng);

    const std::string path =
        (std::filesystem::temp_directory_path() / "ptpmx_obs_test.csv").string();
    write_obs_csv(obs, path);
    const ObservationSet back = read_obs_csv(path);
    std::filesystem::remove(path);

    CHECK(back.kind.variant == obs.kind.variant);
    CHECK(back.kind.pairs == obs.kind.pairs);
    CHECK(back.kind.blocks == obs.kind.blocks);
    REQUIRE(back.y1.size() == obs.y1.size());
    for (std::size_t i = 0; i < obs.y1.size(); ++i) {
        CHECK(back.y1[i] == doctest::Approx(obs.y1[i]).epsilon(1e-12));
        CHECK(back.y2[i] == doctest::Approx(obs.y2[i]).epsilon(1e-12));
    }
}

}  // TEST_SUITE
