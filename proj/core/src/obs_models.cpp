#include "ptpmx/obs_models.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ptpmx {

ModelVariant parse_model_variant(const std::string& name) {
    if (name == "k" || name == "K") return ModelVariant::K;
    if (name == "s" || name == "S") return ModelVariant::S;
    if (name == "m" || name == "M") return ModelVariant::M;
    throw std::invalid_argument("unknown model: " + name);
}

std::string model_variant_name(ModelVariant v) {
    switch (v) {
        case ModelVariant::K: return "k";
        case ModelVariant::S: return "s";
        case ModelVariant::M: return "m";
    }
    return "?";
}

void ModelKind::validate() const {
    if (pairs < 1) throw std::invalid_argument("model needs at least one observation pair");
    if (variant == ModelVariant::M) {
        if (blocks < 1) throw std::invalid_argument("M-model needs at least one past block");
    } else if (blocks != 0) {
        throw std::invalid_argument("past blocks only apply to the M-model");
    }
}

int ModelKind::param_dim() const {
    switch (variant) {
        case ModelVariant::K: return 1;
        case ModelVariant::S: return 2;
        case ModelVariant::M: return blocks + 2;
    }
    return 0;
}

std::span<const double> ObservationSet::y1_block(int block) const {
    const auto p = static_cast<std::size_t>(kind.pairs);
    return {y1.data() + static_cast<std::size_t>(block) * p, p};
}

std::span<const double> ObservationSet::y2_block(int block) const {
    const auto p = static_cast<std::size_t>(kind.pairs);
    return {y2.data() + static_cast<std::size_t>(block) * p, p};
}

void ObservationSet::validate() const {
    kind.validate();
    const auto expected = static_cast<std::size_t>(kind.pairs) *
                          static_cast<std::size_t>(1 + kind.blocks);
    if (y1.size() != expected || y2.size() != expected) {
        throw std::invalid_argument("observation vectors do not match the model shape");
    }
    for (const auto* v : {&y1, &y2}) {
        for (double x : *v) {
            if (!std::isfinite(x)) throw std::invalid_argument("non-finite observation");
        }
    }
}

ObservationSet generate(const ModelKind& kind, const GroundTruth& truth,
                        const EmpiricalPdf& f1, const EmpiricalPdf& f2, Rng& rng) {
    kind.validate();
    const bool multiblock = kind.variant == ModelVariant::M;
    if (multiblock &&
        truth.past_deltas.size() != static_cast<std::size_t>(kind.blocks)) {
        throw std::invalid_argument("ground truth past_deltas must have B entries");
    }

    const double d = kind.variant == ModelVariant::K ? 0.0 : truth.d;
    ObservationSet obs;
    obs.kind = kind;
    const auto total = static_cast<std::size_t>(kind.pairs) *
                       static_cast<std::size_t>(1 + kind.blocks);
    obs.y1.reserve(total);
    obs.y2.reserve(total);

    for (int b = 0; b <= kind.blocks; ++b) {
        const double delta =
            b == 0 ? truth.delta : truth.past_deltas[static_cast<std::size_t>(b - 1)];
        std::vector<double> fwd(static_cast<std::size_t>(kind.pairs));
        std::vector<double> rev(static_cast<std::size_t>(kind.pairs));
        for (int i = 0; i < kind.pairs; ++i) {
            fwd[static_cast<std::size_t>(i)] = d + delta + f1.sample(rng);
            rev[static_cast<std::size_t>(i)] = d - delta + f2.sample(rng);
        }
        obs.y1.insert(obs.y1.end(), fwd.begin(), fwd.end());
        obs.y2.insert(obs.y2.end(), rev.begin(), rev.end());
    }
    return obs;
}

ObservationSet shift(const ObservationSet& obs, std::span<const double> h) {
    obs.validate();
    if (static_cast<int>(h.size()) != obs.kind.param_dim()) {
        throw std::invalid_argument("shift vector does not match the model's parameter dimension");
    }
    ObservationSet out = obs;
    const auto p = static_cast<std::size_t>(obs.kind.pairs);
    switch (obs.kind.variant) {
        case ModelVariant::K:
            for (std::size_t i = 0; i < p; ++i) {
                out.y1[i] += h[0];
                out.y2[i] -= h[0];
            }
            break;
        case ModelVariant::S:
            for (std::size_t i = 0; i < p; ++i) {
                out.y1[i] += h[0];
                out.y2[i] += h[1];
            }
            break;
        case ModelVariant::M: {
            // h = [d0, delta0, delta_1..delta_B]
            for (int b = 0; b <= obs.kind.blocks; ++b) {
                const double delta = h[static_cast<std::size_t>(b) + 1];
                for (std::size_t i = 0; i < p; ++i) {
                    const std::size_t at = static_cast<std::size_t>(b) * p + i;
                    out.y1[at] += h[0] + delta;
                    out.y2[at] += h[0] - delta;
                }
            }
            break;
        }
    }
    return out;
}

double target_offset(const ModelKind& kind, std::span<const double> h) {
    if (static_cast<int>(h.size()) != kind.param_dim()) {
        throw std::invalid_argument("parameter vector does not match the model's dimension");
    }
    switch (kind.variant) {
        case ModelVariant::K: return h[0];
        case ModelVariant::S: return 0.5 * (h[0] - h[1]);
        case ModelVariant::M: return h[1];
    }
    return 0.0;
}

void write_obs_csv(const ObservationSet& obs, const std::string& path) {
    obs.validate();
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << "kind,P,B\n";
    f << model_variant_name(obs.kind.variant) << "," << obs.kind.pairs << ","
      << obs.kind.blocks << "\n";
    f << "block,index,direction,value_us\n";
    char buf[64];
    for (int b = 0; b <= obs.kind.blocks; ++b) {
        for (int dir = 1; dir <= 2; ++dir) {
            const auto vals = dir == 1 ? obs.y1_block(b) : obs.y2_block(b);
            for (int i = 0; i < obs.kind.pairs; ++i) {
                std::snprintf(buf, sizeof(buf), "%.17g",
                              vals[static_cast<std::size_t>(i)] * 1e6);
                f << b << "," << i << "," << dir << "," << buf << "\n";
            }
        }
    }
}

ObservationSet read_obs_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open observation csv: " + path);
    std::string line;
    if (!std::getline(f, line) || line != "kind,P,B") {
        throw std::runtime_error("observation csv: expected kind,P,B header");
    }
    if (!std::getline(f, line)) throw std::runtime_error("observation csv: missing shape row");
    std::istringstream shape(line);
    std::string kind_str, p_str, b_str;
    std::getline(shape, kind_str, ',');
    std::getline(shape, p_str, ',');
    std::getline(shape, b_str, ',');

    ObservationSet obs;
    obs.kind.variant = parse_model_variant(kind_str);
    obs.kind.pairs = std::stoi(p_str);
    obs.kind.blocks = std::stoi(b_str);
    obs.kind.validate();

    const auto total = static_cast<std::size_t>(obs.kind.pairs) *
                       static_cast<std::size_t>(1 + obs.kind.blocks);
    obs.y1.assign(total, 0.0);
    obs.y2.assign(total, 0.0);

    const auto p = static_cast<std::size_t>(obs.kind.pairs);
    while (std::getline(f, line)) {
        if (line.empty() || line == "block,index,direction,value_us") continue;
        std::istringstream row(line);
        std::string block_s, idx_s, dir_s, val_s;
        std::getline(row, block_s, ',');
        std::getline(row, idx_s, ',');
        std::getline(row, dir_s, ',');
        std::getline(row, val_s, ',');
        const auto b = static_cast<std::size_t>(std::stoi(block_s));
        const auto i = static_cast<std::size_t>(std::stoi(idx_s));
        const int dir = std::stoi(dir_s);
        if (b > static_cast<std::size_t>(obs.kind.blocks) || i >= p || (dir != 1 && dir != 2)) {
            throw std::runtime_error("observation csv: row out of range: " + line);
        }
        (dir == 1 ? obs.y1 : obs.y2)[b * p + i] = std::stod(val_s) * 1e-6;
    }
    obs.validate();
    return obs;
}

}  // namespace ptpmx
