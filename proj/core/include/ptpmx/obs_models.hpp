#pragma once

#include <span>
#include <string>
#include <vector>

#include "ptpmx/empirical_pdf.hpp"
#include "ptpmx/rng.hpp"

namespace ptpmx {

enum class ModelVariant { K, S, M };

ModelVariant parse_model_variant(const std::string& name);
std::string model_variant_name(ModelVariant v);

// Observation model shape: P exchange pairs per block; M additionally
// carries B past blocks that share the fixed delay.
struct ModelKind {
    ModelVariant variant = ModelVariant::K;
    int pairs = 1;   // P
    int blocks = 0;  // B, nonzero only for M

    static ModelKind k(int pairs) { return {ModelVariant::K, pairs, 0}; }
    static ModelKind s(int pairs) { return {ModelVariant::S, pairs, 0}; }
    static ModelKind m(int pairs, int blocks) { return {ModelVariant::M, pairs, blocks}; }

    void validate() const;
    // dimension of the parameter vector: K: 1 (delta); S: 2 (d+delta,
    // d-delta); M: B+2 (d, delta, past deltas)
    int param_dim() const;
};

struct GroundTruth {
    double delta = 0.0;  // current-block phase offset, seconds
    double d = 0.0;      // fixed delay, S/M only
    std::vector<double> past_deltas;  // M only, length B
};

// Forward/reverse timestamp-difference vectors. Layout: current block
// first, then past blocks in order, P entries each; y1 is the forward
// (master-to-slave) direction, y2 the reverse.
struct ObservationSet {
    ModelKind kind;
    std::vector<double> y1;  // seconds
    std::vector<double> y2;

    std::span<const double> y1_block(int block) const;
    std::span<const double> y2_block(int block) const;
    std::span<const double> y1_current() const { return y1_block(0); }
    std::span<const double> y2_current() const { return y2_block(0); }

    void validate() const;
};

// Draws observations from the model equations with independent queuing
// delays from f1 (forward) and f2 (reverse). Draw order is fixed: per
// block (current first, then past blocks), pairs in order, forward draw
// then reverse draw, so runs with a common stream share the current-block
// delays across model variants and across P prefixes.
ObservationSet generate(const ModelKind& kind, const GroundTruth& truth,
                        const EmpiricalPdf& f1, const EmpiricalPdf& f2, Rng& rng);

// y + G h for the model's shift structure; h must have param_dim entries.
ObservationSet shift(const ObservationSet& obs, std::span<const double> h);

// c^T h: the phase-offset component of a parameter vector.
double target_offset(const ModelKind& kind, std::span<const double> h);

// Observation CSV: `kind,P,B` header + value row, then
// `block,index,direction,value_us` rows. Block 0 is the current block.
void write_obs_csv(const ObservationSet& obs, const std::string& path);
ObservationSet read_obs_csv(const std::string& path);

}  // namespace ptpmx
