#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ptpmx/empirical_pdf.hpp"
#include "ptpmx/rng.hpp"

namespace ptpmx {

enum class PacketSizeKind { TM1, TM2, UniformInline, Custom };

// Distribution of background packet sizes. TM1/TM2 are the discrete
// G.8261-style mixes over {64, 576, 1518} bytes; UniformInline is
// continuous uniform on [64, 1500] bytes.
struct PacketSizeModel {
    PacketSizeKind kind = PacketSizeKind::TM1;
    // discrete variants: (bytes, probability), probabilities sum to 1
    std::vector<std::pair<double, double>> discrete;
    // UniformInline: range in bytes
    double uniform_min_bytes = 0.0;
    double uniform_max_bytes = 0.0;

    static PacketSizeModel tm1();
    static PacketSizeModel tm2();
    static PacketSizeModel uniform_inline();
    static PacketSizeModel point_mass(double bytes);
    static PacketSizeModel custom(std::vector<std::pair<double, double>> sizes);

    void validate() const;
    double mean_bytes() const;
    double mean_square_bytes() const;
    double sample_bytes(Rng& rng) const;
};

PacketSizeModel parse_packet_size_model(const std::string& name);

enum class FlowType { Cross, Inline, Mixed };
enum class Direction { Forward, Reverse };

FlowType parse_flow_type(const std::string& name);

// Background traffic for one direction of the cascade.
struct DirectionConfig {
    double cross_load = 0.0;  // fraction of link rate, injected fresh at every node
    PacketSizeModel cross_model = PacketSizeModel::tm1();
    double inline_load = 0.0;  // fraction, injected at node 1 and forwarded along the path
    PacketSizeModel inline_model = PacketSizeModel::uniform_inline();

    double total_load() const { return cross_load + inline_load; }
};

struct TrafficScenario {
    double link_rate_bps = 1e9;
    int num_switches = 1;
    FlowType flow = FlowType::Cross;
    DirectionConfig forward;
    DirectionConfig reverse;

    void validate() const;
    const DirectionConfig& dir(Direction d) const {
        return d == Direction::Forward ? forward : reverse;
    }
};

// Per-probe queuing delays: one row per probe, one column per node, plus
// the end-to-end row sums. carried_load is the measured busy fraction of
// each node's output link.
struct DelayTrace {
    int num_nodes = 0;
    std::size_t num_probes = 0;
    std::vector<double> per_node;  // row-major [probe][node], seconds
    std::vector<double> ete;       // seconds
    std::vector<double> carried_load;

    double node_delay(std::size_t probe, int node) const {
        return per_node[probe * static_cast<std::size_t>(num_nodes) +
                        static_cast<std::size_t>(node)];
    }
};

struct SimOptions {
    // Warm-up horizon per node: this many background packets or this much
    // simulated time, whichever comes first.
    uint64_t warmup_packets = 100000;
    double warmup_max_time = 1.0;  // seconds
    // Mean spacing between probe injections; 0 selects 50x the busiest
    // node's mean background interarrival (1 ms when there is no load).
    double probe_spacing = 0.0;
    // Probes per independent replication when batching across workers.
    std::size_t batch_probes = 1u << 18;
};

// Poisson arrival rate that produces the given load on a link.
double load_to_arrival_rate(double load, double link_rate_bps, const PacketSizeModel& model);

// Waiting times of probes at one FIFO output queue fed by Poisson cross
// traffic. The probe's own transmission time is excluded (a constant,
// accounted to the fixed delay).
std::vector<double> simulate_cross_single_node(const DirectionConfig& cfg,
                                               double link_rate_bps,
                                               std::size_t num_probes, Rng& rng,
                                               const SimOptions& opts = {});

// One direction of the cascade: fresh cross traffic at every node, inline
// traffic injected at node 1 and forwarded event-by-event so downstream
// arrivals are upstream departures.
DelayTrace simulate_cascade(const TrafficScenario& scenario, Direction direction,
                            std::size_t num_probes, Rng& rng,
                            const SimOptions& opts = {});

// Deterministic multi-replication version: probes are split into fixed
// batches seeded by (seed, batch index), so the result is identical for
// any worker count.
DelayTrace simulate_cascade_batched(const TrafficScenario& scenario, Direction direction,
                                    std::size_t num_probes, uint64_t seed, int workers,
                                    const SimOptions& opts = {});

EmpiricalPdf delay_pdf(const TrafficScenario& scenario, Direction direction,
                       std::size_t num_probes, double bin_width, uint64_t seed,
                       int workers = 1, const SimOptions& opts = {});

// Delay-trace dump: one row per probe, columns node_1..node_N, ete (us).
void write_trace_csv(const DelayTrace& trace, const std::string& path);

}  // namespace ptpmx
