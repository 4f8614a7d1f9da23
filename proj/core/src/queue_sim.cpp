#include "ptpmx/queue_sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <queue>
#include <stdexcept>
#include <thread>

namespace ptpmx {

PacketSizeModel PacketSizeModel::tm1() {
    PacketSizeModel m;
    m.kind = PacketSizeKind::TM1;
    m.discrete = {{64.0, 0.80}, {576.0, 0.05}, {1518.0, 0.15}};
    return m;
}

PacketSizeModel PacketSizeModel::tm2() {
    PacketSizeModel m;
    m.kind = PacketSizeKind::TM2;
    m.discrete = {{64.0, 0.30}, {576.0, 0.10}, {1518.0, 0.60}};
    return m;
}

PacketSizeModel PacketSizeModel::uniform_inline() {
    PacketSizeModel m;
    m.kind = PacketSizeKind::UniformInline;
    m.uniform_min_bytes = 64.0;
    m.uniform_max_bytes = 1500.0;
    return m;
}

PacketSizeModel PacketSizeModel::point_mass(double bytes) {
    PacketSizeModel m;
    m.kind = PacketSizeKind::Custom;
    m.discrete = {{bytes, 1.0}};
    return m;
}

PacketSizeModel PacketSizeModel::custom(std::vector<std::pair<double, double>> sizes) {
    PacketSizeModel m;
    m.kind = PacketSizeKind::Custom;
    m.discrete = std::move(sizes);
    return m;
}

void PacketSizeModel::validate() const {
    if (kind == PacketSizeKind::UniformInline) {
        if (uniform_min_bytes <= 0.0 || uniform_max_bytes <= uniform_min_bytes) {
            throw std::invalid_argument("packet size model: bad uniform range");
        }
        return;
    }
    if (discrete.empty()) throw std::invalid_argument("packet size model: no sizes");
    double psum = 0.0;
    for (const auto& [bytes, p] : discrete) {
        if (bytes <= 0.0) throw std::invalid_argument("packet size model: size must be positive");
        if (p < 0.0) throw std::invalid_argument("packet size model: negative probability");
        psum += p;
    }
    if (std::abs(psum - 1.0) > 1e-9) {
        throw std::invalid_argument("packet size model: probabilities must sum to 1");
    }
}

double PacketSizeModel::mean_bytes() const {
    if (kind == PacketSizeKind::UniformInline) {
        return 0.5 * (uniform_min_bytes + uniform_max_bytes);
    }
    double m = 0.0;
    for (const auto& [bytes, p] : discrete) m += bytes * p;
    return m;
}

double PacketSizeModel::mean_square_bytes() const {
    if (kind == PacketSizeKind::UniformInline) {
        const double a = uniform_min_bytes, b = uniform_max_bytes;
        return (b * b * b - a * a * a) / (3.0 * (b - a));
    }
    double m = 0.0;
    for (const auto& [bytes, p] : discrete) m += bytes * bytes * p;
    return m;
}

double PacketSizeModel::sample_bytes(Rng& rng) const {
    if (kind == PacketSizeKind::UniformInline) {
        return rng.uniform(uniform_min_bytes, uniform_max_bytes);
    }
    const double u = rng.uniform01();
    double cum = 0.0;
    for (const auto& [bytes, p] : discrete) {
        cum += p;
        if (u < cum) return bytes;
    }
    return discrete.back().first;
}

PacketSizeModel parse_packet_size_model(const std::string& name) {
    if (name == "tm1") return PacketSizeModel::tm1();
    if (name == "tm2") return PacketSizeModel::tm2();
    if (name == "uniform") return PacketSizeModel::uniform_inline();
    throw std::invalid_argument("unknown packet size model: " + name);
}

FlowType parse_flow_type(const std::string& name) {
    if (name == "cross") return FlowType::Cross;
    if (name == "inline") return FlowType::Inline;
    if (name == "mixed") return FlowType::Mixed;
    throw std::invalid_argument("unknown flow type: " + name);
}

void TrafficScenario::validate() const {
    if (link_rate_bps <= 0.0) throw std::invalid_argument("scenario: link rate must be positive");
    if (num_switches < 1) throw std::invalid_argument("scenario: need at least one switch");
    for (const auto* d : {&forward, &reverse}) {
        if (d->cross_load < 0.0 || d->inline_load < 0.0) {
            throw std::invalid_argument("scenario: loads must be non-negative");
        }
        if (d->total_load() >= 1.0) throw std::invalid_argument("unstable queue: load >= 1");
        if (d->cross_load > 0.0) d->cross_model.validate();
        if (d->inline_load > 0.0) d->inline_model.validate();
    }
}

double load_to_arrival_rate(double load, double link_rate_bps, const PacketSizeModel& model) {
    if (!(load > 0.0 && load < 1.0)) {
        throw std::invalid_argument("load must lie in (0, 1)");
    }
    return load * link_rate_bps / (model.mean_bytes() * 8.0);
}

namespace {

enum class EventKind : uint8_t { CrossArrival, InlineArrival, ProbeArrival };

struct Event {
    double time;
    EventKind kind;
    int node;
    double service;  // seconds; 0 for probes
    uint64_t seq;    // tie-break for a total order
};

struct EventAfter {
    bool operator()(const Event& a, const Event& b) const {
        if (a.time != b.time) return a.time > b.time;
        return a.seq > b.seq;
    }
};

// One direction of the cascade, one replication. Background packets drive
// per-node FIFO busy periods; probes are zero-size observers that sample
// the remaining workload and never delay other traffic.
class CascadeSim {
public:
    CascadeSim(const TrafficScenario& sc, Direction dir, std::size_t num_probes,
               uint64_t seed, const SimOptions& opts)
        : cfg_(sc.dir(dir)),
          rate_(sc.link_rate_bps),
          nodes_(sc.num_switches),
          num_probes_(num_probes),
          opts_(opts),
          probe_rng_(Rng::substream(seed, 0)),
          inline_rng_(Rng::substream(seed, 1)) {
        cross_rng_.reserve(static_cast<std::size_t>(nodes_));
        for (int n = 0; n < nodes_; ++n) {
            cross_rng_.push_back(Rng::substream(seed, 2 + static_cast<uint64_t>(n)));
        }
        const FlowType flow = sc.flow;
        cross_rate_ = 0.0;
        inline_rate_ = 0.0;
        if ((flow == FlowType::Cross || flow == FlowType::Mixed) && cfg_.cross_load > 0.0) {
            cross_rate_ = load_to_arrival_rate(cfg_.cross_load, rate_, cfg_.cross_model);
        }
        if ((flow == FlowType::Inline || flow == FlowType::Mixed) && cfg_.inline_load > 0.0) {
            inline_rate_ = load_to_arrival_rate(cfg_.inline_load, rate_, cfg_.inline_model);
        }
        busy_until_.assign(static_cast<std::size_t>(nodes_), 0.0);
        busy_time_.assign(static_cast<std::size_t>(nodes_), 0.0);
        bg_count_.assign(static_cast<std::size_t>(nodes_), 0);
        cross_epoch_.assign(static_cast<std::size_t>(nodes_), 0.0);
    }

    DelayTrace run() {
        DelayTrace trace;
        trace.num_nodes = nodes_;
        trace.num_probes = num_probes_;
        trace.per_node.assign(num_probes_ * static_cast<std::size_t>(nodes_), 0.0);
        trace.ete.assign(num_probes_, 0.0);

        if (cross_rate_ > 0.0) {
            for (int n = 0; n < nodes_; ++n) schedule_cross(n);
        }
        if (inline_rate_ > 0.0) schedule_inline();

        const bool has_background = cross_rate_ > 0.0 || inline_rate_ > 0.0;
        warm_ = !has_background;
        if (warm_) schedule_probe();

        std::size_t probes_done = 0;
        double now = 0.0;
        while (probes_done < num_probes_) {
            if (events_.empty()) throw std::logic_error("queue sim ran out of events");
            Event ev = events_.top();
            events_.pop();
            now = ev.time;

            if (!warm_ && now >= opts_.warmup_max_time) start_probes(now);

            switch (ev.kind) {
                case EventKind::CrossArrival: {
                    serve_background(ev);
                    schedule_cross(ev.node);
                    break;
                }
                case EventKind::InlineArrival: {
                    const double dep = serve_background(ev);
                    if (ev.node + 1 < nodes_) {
                        push({dep, EventKind::InlineArrival, ev.node + 1,
                              ev.service, next_seq_++});
                    }
                    if (ev.node == 0) schedule_inline();
                    break;
                }
                case EventKind::ProbeArrival: {
                    const double wait = std::max(0.0, busy_until_[static_cast<std::size_t>(ev.node)] - now);
                    const std::size_t probe = static_cast<std::size_t>(ev.seq);
                    trace.per_node[probe * static_cast<std::size_t>(nodes_) +
                                   static_cast<std::size_t>(ev.node)] = wait;
                    trace.ete[probe] += wait;
                    if (ev.node + 1 < nodes_) {
                        push({now + wait, EventKind::ProbeArrival, ev.node + 1, 0.0, ev.seq});
                    } else {
                        ++probes_done;
                    }
                    if (ev.node == 0 && ev.seq + 1 < num_probes_) schedule_probe();
                    break;
                }
            }
        }

        trace.carried_load.assign(static_cast<std::size_t>(nodes_), 0.0);
        if (now > 0.0) {
            for (int n = 0; n < nodes_; ++n) {
                trace.carried_load[static_cast<std::size_t>(n)] =
                    busy_time_[static_cast<std::size_t>(n)] / now;
            }
        }
        return trace;
    }

private:
    double serve_background(const Event& ev) {
        const auto n = static_cast<std::size_t>(ev.node);
        const double start = std::max(busy_until_[n], ev.time);
        const double dep = start + ev.service;
        busy_until_[n] = dep;
        busy_time_[n] += ev.service;
        if (!warm_ && ++bg_count_[n] == opts_.warmup_packets &&
            ++warm_nodes_ == nodes_) {
            start_probes(ev.time);
        }
        return dep;
    }

    void start_probes(double now) {
        warm_ = true;
        probe_epoch_ = now;
        schedule_probe();
    }

    double probe_spacing() const {
        if (opts_.probe_spacing > 0.0) return opts_.probe_spacing;
        const double busiest = cross_rate_ + inline_rate_;
        return busiest > 0.0 ? 50.0 / busiest : 1e-3;
    }

    void schedule_probe() {
        probe_epoch_ += probe_rng_.exponential(probe_spacing());
        push({probe_epoch_, EventKind::ProbeArrival, 0, 0.0, probes_emitted_++});
    }

    void schedule_cross(int node) {
        const auto n = static_cast<std::size_t>(node);
        cross_epoch_[n] += cross_rng_[n].exponential(1.0 / cross_rate_);
        const double service = cfg_.cross_model.sample_bytes(cross_rng_[n]) * 8.0 / rate_;
        push({cross_epoch_[n], EventKind::CrossArrival, node, service, next_seq_++});
    }

    void schedule_inline() {
        inline_epoch_ += inline_rng_.exponential(1.0 / inline_rate_);
        const double service = cfg_.inline_model.sample_bytes(inline_rng_) * 8.0 / rate_;
        push({inline_epoch_, EventKind::InlineArrival, 0, service, next_seq_++});
    }

    void push(Event ev) { events_.push(ev); }

    const DirectionConfig& cfg_;
    double rate_;
    int nodes_;
    std::size_t num_probes_;
    SimOptions opts_;

    Rng probe_rng_;
    Rng inline_rng_;
    std::vector<Rng> cross_rng_;

    double cross_rate_ = 0.0;
    double inline_rate_ = 0.0;

    std::priority_queue<Event, std::vector<Event>, EventAfter> events_;
    std::vector<double> busy_until_;
    std::vector<double> busy_time_;
    std::vector<uint64_t> bg_count_;
    std::vector<double> cross_epoch_;
    double inline_epoch_ = 0.0;
    double probe_epoch_ = 0.0;
    uint64_t next_seq_ = 1ull << 32;  // background seqs above probe indices
    uint64_t probes_emitted_ = 0;
    int warm_nodes_ = 0;
    bool warm_ = false;
};

}  // namespace

std::vector<double> simulate_cross_single_node(const DirectionConfig& cfg,
                                               double link_rate_bps,
                                               std::size_t num_probes, Rng& rng,
                                               const SimOptions& opts) {
    TrafficScenario sc;
    sc.link_rate_bps = link_rate_bps;
    sc.num_switches = 1;
    sc.flow = FlowType::Cross;
    sc.forward = cfg;
    sc.validate();
    DelayTrace trace = simulate_cascade(sc, Direction::Forward, num_probes, rng, opts);
    return trace.ete;
}

DelayTrace simulate_cascade(const TrafficScenario& scenario, Direction direction,
                            std::size_t num_probes, Rng& rng, const SimOptions& opts) {
    scenario.validate();
    if (num_probes == 0) throw std::invalid_argument("need at least one probe");
    CascadeSim sim(scenario, direction, num_probes, rng.next_u64(), opts);
    return sim.run();
}

DelayTrace simulate_cascade_batched(const TrafficScenario& scenario, Direction direction,
                                    std::size_t num_probes, uint64_t seed, int workers,
                                    const SimOptions& opts) {
    scenario.validate();
    if (num_probes == 0) throw std::invalid_argument("need at least one probe");
    const std::size_t batch = std::max<std::size_t>(1, opts.batch_probes);
    const std::size_t num_batches = (num_probes + batch - 1) / batch;
    const uint64_t dir_salt = direction == Direction::Forward ? 0x666f7277ull : 0x72657665ull;

    std::vector<DelayTrace> parts(num_batches);
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (;;) {
            const std::size_t b = next.fetch_add(1);
            if (b >= num_batches) return;
            const std::size_t lo = b * batch;
            const std::size_t n = std::min(batch, num_probes - lo);
            CascadeSim sim(scenario, direction, n,
                           substream_seed(seed ^ dir_salt, b), opts);
            parts[b] = sim.run();
        }
    };
    const int nthreads = std::max(1, std::min<int>(workers, static_cast<int>(num_batches)));
    if (nthreads == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(nthreads));
        for (int i = 0; i < nthreads; ++i) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }

    DelayTrace out;
    out.num_nodes = scenario.num_switches;
    out.num_probes = num_probes;
    out.per_node.reserve(num_probes * static_cast<std::size_t>(out.num_nodes));
    out.ete.reserve(num_probes);
    out.carried_load.assign(static_cast<std::size_t>(out.num_nodes), 0.0);
    for (const auto& p : parts) {
        out.per_node.insert(out.per_node.end(), p.per_node.begin(), p.per_node.end());
        out.ete.insert(out.ete.end(), p.ete.begin(), p.ete.end());
        for (int n = 0; n < out.num_nodes; ++n) {
            out.carried_load[static_cast<std::size_t>(n)] +=
                p.carried_load[static_cast<std::size_t>(n)] * static_cast<double>(p.num_probes);
        }
    }
    for (double& c : out.carried_load) c /= static_cast<double>(num_probes);
    return out;
}

EmpiricalPdf delay_pdf(const TrafficScenario& scenario, Direction direction,
                       std::size_t num_probes, double bin_width, uint64_t seed,
                       int workers, const SimOptions& opts) {
    DelayTrace trace = simulate_cascade_batched(scenario, direction, num_probes, seed,
                                                workers, opts);
    return EmpiricalPdf::from_samples(trace.ete, bin_width);
}

void write_trace_csv(const DelayTrace& trace, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    for (int n = 1; n <= trace.num_nodes; ++n) {
        f << "node_" << n << ",";
    }
    f << "ete\n";
    char buf[64];
    for (std::size_t p = 0; p < trace.num_probes; ++p) {
        for (int n = 0; n < trace.num_nodes; ++n) {
            std::snprintf(buf, sizeof(buf), "%.17g,", trace.node_delay(p, n) * 1e6);
            f << buf;
        }
        std::snprintf(buf, sizeof(buf), "%.17g\n", trace.ete[p] * 1e6);
        f << buf;
    }
}

}  // namespace ptpmx
