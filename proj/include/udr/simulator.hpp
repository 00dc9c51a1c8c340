#pragma once

// Synthetic encoder populations with known ground truth.
//
// A simulated encoder maps each factor assignment to a latent mean vector:
// every active factor is normalised to [-1, 1], passed through a monotone
// response map, sign-flipped and written into its latent slot; the active
// slots are then mixed (planar rotations over consecutive slot pairs, or a
// random orthogonal matrix), and Gaussian noise is added. Slots that hold
// no factor are dead: pure noise with a KL below the informative threshold.
// Noise is a hash of (seed, flat factor index, latent), so an encoder gives
// the same response for a sample however it is queried.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "udr/core.hpp"
#include "udr/rng.hpp"

namespace udr::sim {

/// KL at or below this value marks a latent as uninformative.
inline constexpr double kInformativeThreshold = 0.01;

enum class ResponseMap { identity, cube, scaled_sigmoid, circular };
enum class MixingMode { pairwise, orthogonal };

inline const char* to_string(ResponseMap m) {
    switch (m) {
        case ResponseMap::identity: return "identity";
        case ResponseMap::cube: return "cube";
        case ResponseMap::scaled_sigmoid: return "scaled_sigmoid";
        case ResponseMap::circular: return "circular";
    }
    return "identity";
}

inline ResponseMap response_map_from_string(const std::string& s) {
    if (s == "identity") return ResponseMap::identity;
    if (s == "cube") return ResponseMap::cube;
    if (s == "scaled_sigmoid") return ResponseMap::scaled_sigmoid;
    if (s == "circular") return ResponseMap::circular;
    throw ValidationError("unknown response map '" + s + "'");
}

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

struct EncoderConfig {
    int n_latents = 10;
    std::vector<int> active_factors;  // factor indices that are encoded
    std::vector<int> slots;           // latent slot of each active factor
    std::vector<int> signs;           // +1 / -1 per active factor
    std::vector<ResponseMap> maps;    // per active factor
    double mixing_angle = 0.0;        // radians in [0, pi/4]
    MixingMode mixing = MixingMode::pairwise;
    double noise_sd = 0.0;
    int dead_latent_count = 0;
    double dead_noise_sd = 0.1;
    Interval kl_active{0.5, 2.0};
    Interval kl_dead{0.0, 0.005};
    std::uint64_t rng_seed = 0;
};

/// Throws ValidationError if `cfg` cannot drive an encoder over `spec`.
inline void validate(const EncoderConfig& cfg, const FactorSpec& spec) {
    const auto a = cfg.active_factors.size();
    const auto k = static_cast<int>(spec.size());
    if (cfg.n_latents < 1) throw ValidationError("encoder needs at least one latent");
    if (cfg.slots.size() != a || cfg.signs.size() != a || cfg.maps.size() != a)
        throw ValidationError("encoder config: slots/signs/maps must match active_factors");
    if (static_cast<int>(a) + cfg.dead_latent_count > cfg.n_latents)
        throw ValidationError("encoder config: active factors + dead latents exceed L");
    if (cfg.dead_latent_count < 0) throw ValidationError("encoder config: negative dead_latent_count");
    std::vector<bool> seen_factor(static_cast<std::size_t>(k), false);
    std::vector<bool> seen_slot(static_cast<std::size_t>(cfg.n_latents), false);
    for (std::size_t i = 0; i < a; ++i) {
        const int f = cfg.active_factors[i];
        const int s = cfg.slots[i];
        if (f < 0 || f >= k) throw ValidationError("encoder config: active factor out of range for the grid");
        if (s < 0 || s >= cfg.n_latents) throw ValidationError("encoder config: latent slot out of range");
        if (seen_factor[static_cast<std::size_t>(f)]) throw ValidationError("encoder config: repeated factor");
        if (seen_slot[static_cast<std::size_t>(s)]) throw ValidationError("encoder config: repeated slot");
        seen_factor[static_cast<std::size_t>(f)] = true;
        seen_slot[static_cast<std::size_t>(s)] = true;
        if (cfg.signs[i] != 1 && cfg.signs[i] != -1) throw ValidationError("encoder config: signs must be +1 or -1");
    }
    if (!(cfg.mixing_angle >= 0.0 && cfg.mixing_angle <= std::numbers::pi / 4 + 1e-12))
        throw ValidationError("encoder config: mixing_angle must lie in [0, pi/4]");
    if (!(cfg.noise_sd >= 0.0) || !(cfg.dead_noise_sd >= 0.0))
        throw ValidationError("encoder config: noise levels must be >= 0");
    if (cfg.kl_dead.lo < 0.0 || cfg.kl_dead.lo > cfg.kl_dead.hi || cfg.kl_dead.hi > kInformativeThreshold)
        throw ValidationError("encoder config: kl_dead_range must lie below the informative threshold");
    if (cfg.kl_active.lo > cfg.kl_active.hi || cfg.kl_active.lo <= kInformativeThreshold)
        throw ValidationError("encoder config: kl_active_range must lie above the informative threshold");
}

/// Deterministic encoder over a factor space; the simulator's stand-in for a
/// trained model. Usable directly as a supervised-metric oracle.
class SimulatedEncoder {
public:
    SimulatedEncoder(FactorSpec spec, EncoderConfig cfg) : spec_(std::move(spec)), cfg_(std::move(cfg)) {
        validate(cfg_, spec_);
        build_mixing();
        build_kl();
    }

    const FactorSpec& spec() const noexcept { return spec_; }
    const EncoderConfig& config() const noexcept { return cfg_; }
    std::size_t latent_dim() const noexcept { return static_cast<std::size_t>(cfg_.n_latents); }
    const std::vector<double>& kl() const noexcept { return kl_; }

    MatrixD encode(const MatrixI& factors) const {
        if (factors.cols() != spec_.size())
            throw ValidationError("encoder: factor matrix has wrong number of columns");
        const std::size_t L = latent_dim();
        const std::size_t A = cfg_.active_factors.size();
        MatrixD out(factors.rows(), L, 0.0);
        std::vector<double> src(A), mixed(A);
        for (std::size_t n = 0; n < factors.rows(); ++n) {
            auto row = factors.row(n);
            for (std::size_t i = 0; i < A; ++i) {
                const auto f = static_cast<std::size_t>(cfg_.active_factors[i]);
                src[i] = cfg_.signs[i] * respond(cfg_.maps[i], row[f], spec_[f].cardinality);
            }
            // mixed = M * src, M indexed by slot order
            for (std::size_t i = 0; i < A; ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < A; ++j) s += mix_(slot_order_[i], slot_order_[j]) * src[j];
                mixed[i] = s;
            }
            const std::uint64_t key = spec_.flat_index(row);
            auto z = out.row(n);
            for (std::size_t i = 0; i < A; ++i) z[static_cast<std::size_t>(cfg_.slots[i])] = mixed[i];
            for (std::size_t l = 0; l < L; ++l) {
                const double sd = is_active_[l] ? cfg_.noise_sd : cfg_.dead_noise_sd;
                if (sd > 0.0) z[l] += sd * hashed_normal(cfg_.rng_seed, key, l);
            }
        }
        return out;
    }

    static double respond(ResponseMap map, int value, int cardinality) {
        const double x = 2.0 * value / (cardinality - 1) - 1.0;
        switch (map) {
            case ResponseMap::identity: return x;
            case ResponseMap::cube: return x * x * x;
            case ResponseMap::scaled_sigmoid: {
                const double top = 1.0 / (1.0 + std::exp(-4.0)) - 0.5;
                return (1.0 / (1.0 + std::exp(-4.0 * x)) - 0.5) / top;
            }
            case ResponseMap::circular: return std::sin(2.0 * std::numbers::pi * value / cardinality);
        }
        return x;
    }

private:
    void build_mixing() {
        const std::size_t A = cfg_.active_factors.size();
        is_active_.assign(latent_dim(), false);
        for (int s : cfg_.slots) is_active_[static_cast<std::size_t>(s)] = true;
        // position of each active factor when active slots are sorted ascending
        std::vector<std::size_t> by_slot(A);
        for (std::size_t i = 0; i < A; ++i) by_slot[i] = i;
        std::sort(by_slot.begin(), by_slot.end(),
                  [&](std::size_t a, std::size_t b) { return cfg_.slots[a] < cfg_.slots[b]; });
        slot_order_.assign(A, 0);
        for (std::size_t p = 0; p < A; ++p) slot_order_[by_slot[p]] = p;

        mix_ = MatrixD(A, A, 0.0);
        for (std::size_t i = 0; i < A; ++i) mix_(i, i) = 1.0;
        if (cfg_.mixing == MixingMode::pairwise) {
            const double c = std::cos(cfg_.mixing_angle), s = std::sin(cfg_.mixing_angle);
            for (std::size_t p = 0; p + 1 < A; p += 2) {
                mix_(p, p) = c;
                mix_(p, p + 1) = -s;
                mix_(p + 1, p) = s;
                mix_(p + 1, p + 1) = c;
            }
        } else {
            // Gram-Schmidt on a seeded Gaussian matrix
            Rng rng(derive_seed(cfg_.rng_seed, {0x6d6978ULL}));
            MatrixD g(A, A);
            for (auto& v : g.data()) v = rng.normal();
            for (std::size_t i = 0; i < A; ++i) {
                for (std::size_t j = 0; j < i; ++j) {
                    double dot = 0.0;
                    for (std::size_t t = 0; t < A; ++t) dot += g(i, t) * g(j, t);
                    for (std::size_t t = 0; t < A; ++t) g(i, t) -= dot * g(j, t);
                }
                double norm = 0.0;
                for (std::size_t t = 0; t < A; ++t) norm += g(i, t) * g(i, t);
                norm = std::sqrt(norm);
                for (std::size_t t = 0; t < A; ++t) g(i, t) /= norm;
            }
            mix_ = g;
        }
    }

    void build_kl() {
        Rng rng(derive_seed(cfg_.rng_seed, {0x6b6cULL}));
        kl_.resize(latent_dim());
        for (std::size_t l = 0; l < latent_dim(); ++l) {
            const auto& range = is_active_[l] ? cfg_.kl_active : cfg_.kl_dead;
            kl_[l] = rng.uniform(range.lo, range.hi);
            if (!is_active_[l] && kl_[l] >= kInformativeThreshold) kl_[l] = range.lo;
        }
    }

    FactorSpec spec_;
    EncoderConfig cfg_;
    MatrixD mix_;
    std::vector<std::size_t> slot_order_;
    std::vector<bool> is_active_;
    std::vector<double> kl_;
};

struct FullGrid {};
struct UniformSample {
    std::size_t n = 0;
    std::uint64_t seed = 0;
};
using GridMode = std::variant<FullGrid, UniformSample>;

/// Cartesian product (lexicographic, last factor fastest) or i.i.d. uniform rows.
inline FactorGrid make_factor_grid(const FactorSpec& spec, GridMode mode,
                                   std::uint64_t max_rows = 50'000'000) {
    const std::size_t K = spec.size();
    if (const auto* s = std::get_if<UniformSample>(&mode)) {
        if (s->n == 0) throw ValidationError("uniform sample needs N > 0");
        Rng rng(s->seed);
        MatrixI a(s->n, K);
        for (std::size_t n = 0; n < s->n; ++n)
            for (std::size_t k = 0; k < K; ++k)
                a(n, k) = static_cast<std::int32_t>(rng.uniform_int(static_cast<std::uint64_t>(spec[k].cardinality)));
        return FactorGrid(spec, std::move(a));
    }
    const auto total = spec.product();
    if (!total || *total > max_rows)
        throw ValidationError("full factor grid is too large (product of cardinalities overflows the row budget)");
    const auto N = static_cast<std::size_t>(*total);
    MatrixI a(N, K);
    std::vector<std::int32_t> cur(K, 0);
    for (std::size_t n = 0; n < N; ++n) {
        std::copy(cur.begin(), cur.end(), a.row(n).begin());
        for (std::size_t k = K; k-- > 0;) {
            if (++cur[k] < spec[k].cardinality) break;
            cur[k] = 0;
        }
    }
    return FactorGrid(spec, std::move(a));
}

inline LatentResponse simulate_encoder(const FactorGrid& grid, const EncoderConfig& cfg) {
    SimulatedEncoder enc(grid.spec(), cfg);
    return LatentResponse(enc.encode(grid.assignments()), enc.kl());
}

/// Quality knobs shared by all seeds of one hyperparameter setting.
struct QualitySetting {
    double mixing_angle = 0.0;
    double noise_sd = 0.0;
    int dead_latent_count = 0;
};

using QualitySchedule = std::vector<QualitySetting>;

/// Hyper 0 fully entangled and noisy, the last hyper disentangled and clean,
/// linear in between.
inline QualitySchedule linear_schedule(int hypers, double max_noise = 0.6, double min_noise = 0.05) {
    QualitySchedule out;
    for (int h = 0; h < hypers; ++h) {
        const double t = hypers == 1 ? 1.0 : static_cast<double>(h) / (hypers - 1);
        out.push_back({(1.0 - t) * std::numbers::pi / 4, max_noise + t * (min_noise - max_noise), 0});
    }
    return out;
}

/// Sweep used by the benchmark population. The angle falls linearly and the
/// noise as a power law, so the classification metrics still see graded
/// noise in the intermediate hypers and only the last hyper is fully clean.
inline QualitySchedule benchmark_schedule(int hypers, double max_noise = 2.0, double min_noise = 0.05) {
    QualitySchedule out;
    for (int h = 0; h < hypers; ++h) {
        const double t = hypers == 1 ? 1.0 : static_cast<double>(h) / (hypers - 1);
        const double u = 1.0 - t;
        out.push_back({u * std::numbers::pi / 4, min_noise + (max_noise - min_noise) * std::pow(u, 0.75), 0});
    }
    return out;
}

enum class MapPolicy { identity, random };

struct PopulationOptions {
    int n_latents = 10;
    MapPolicy maps = MapPolicy::identity;
    MixingMode mixing = MixingMode::pairwise;
    double dead_noise_sd = 0.1;
};

/// Random permutation/sign/map draw for one seed under a quality setting.
/// The first min(K, L - dead) factors are encoded.
inline EncoderConfig draw_encoder_config(const FactorSpec& spec, const QualitySetting& q,
                                         const PopulationOptions& opt, std::uint64_t seed) {
    EncoderConfig cfg;
    cfg.n_latents = opt.n_latents;
    cfg.mixing_angle = q.mixing_angle;
    cfg.mixing = opt.mixing;
    cfg.noise_sd = q.noise_sd;
    cfg.dead_latent_count = q.dead_latent_count;
    cfg.dead_noise_sd = opt.dead_noise_sd;
    cfg.rng_seed = seed;
    const int active = std::max(0, std::min(static_cast<int>(spec.size()), opt.n_latents - q.dead_latent_count));
    Rng rng(derive_seed(seed, {0x636667ULL}));
    auto slots = rng.sample_without_replacement(static_cast<std::size_t>(opt.n_latents),
                                                static_cast<std::size_t>(active));
    for (int i = 0; i < active; ++i) {
        cfg.active_factors.push_back(i);
        cfg.slots.push_back(static_cast<int>(slots[static_cast<std::size_t>(i)]));
        cfg.signs.push_back(rng.uniform() < 0.5 ? -1 : 1);
        cfg.maps.push_back(opt.maps == MapPolicy::identity
                               ? ResponseMap::identity
                               : static_cast<ResponseMap>(rng.uniform_int(3)));
    }
    return cfg;
}

inline std::string encoder_config_to_json(const EncoderConfig& c) {
    nlohmann::json j;
    j["n_latents"] = c.n_latents;
    j["active_factors"] = c.active_factors;
    j["slots"] = c.slots;
    j["signs"] = c.signs;
    std::vector<std::string> maps;
    for (auto m : c.maps) maps.emplace_back(to_string(m));
    j["maps"] = maps;
    j["mixing_angle"] = c.mixing_angle;
    j["mixing"] = c.mixing == MixingMode::pairwise ? "pairwise" : "orthogonal";
    j["noise_sd"] = c.noise_sd;
    j["dead_latent_count"] = c.dead_latent_count;
    j["dead_noise_sd"] = c.dead_noise_sd;
    j["kl_active"] = {c.kl_active.lo, c.kl_active.hi};
    j["kl_dead"] = {c.kl_dead.lo, c.kl_dead.hi};
    j["rng_seed"] = c.rng_seed;
    return j.dump();
}

inline EncoderConfig encoder_config_from_json(const std::string& text) {
    try {
        auto j = nlohmann::json::parse(text);
        EncoderConfig c;
        c.n_latents = j.at("n_latents").get<int>();
        c.active_factors = j.at("active_factors").get<std::vector<int>>();
        c.slots = j.at("slots").get<std::vector<int>>();
        c.signs = j.at("signs").get<std::vector<int>>();
        for (const auto& m : j.at("maps")) c.maps.push_back(response_map_from_string(m.get<std::string>()));
        c.mixing_angle = j.at("mixing_angle").get<double>();
        c.mixing = j.at("mixing").get<std::string>() == "orthogonal" ? MixingMode::orthogonal : MixingMode::pairwise;
        c.noise_sd = j.at("noise_sd").get<double>();
        c.dead_latent_count = j.at("dead_latent_count").get<int>();
        c.dead_noise_sd = j.at("dead_noise_sd").get<double>();
        c.kl_active = {j.at("kl_active")[0].get<double>(), j.at("kl_active")[1].get<double>()};
        c.kl_dead = {j.at("kl_dead")[0].get<double>(), j.at("kl_dead")[1].get<double>()};
        c.rng_seed = j.at("rng_seed").get<std::uint64_t>();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed encoder config: ") + e.what());
    }
}

inline std::string model_id_for(int hyper, int seed) {
    return "h" + std::to_string(hyper) + "_s" + std::to_string(seed);
}

/// M = H * S simulated models grouped by hyper index. Records carry their
/// encoder config in metadata so the encoder can be rebuilt as an oracle.
inline ModelSet simulate_population(const FactorGrid& grid, int hypers, int seeds,
                                    const QualitySchedule& schedule, std::uint64_t seed,
                                    const PopulationOptions& opt = {}) {
    if (hypers < 1 || seeds < 1) throw ValidationError("population needs H >= 1 and S >= 1");
    if (static_cast<int>(schedule.size()) < hypers)
        throw ValidationError("quality schedule has fewer entries than hypers");
    std::vector<ModelRecord> records;
    records.reserve(static_cast<std::size_t>(hypers * seeds));
    for (int h = 0; h < hypers; ++h) {
        const auto& q = schedule[static_cast<std::size_t>(h)];
        for (int s = 0; s < seeds; ++s) {
            auto cfg = draw_encoder_config(grid.spec(), q, opt,
                                           derive_seed(seed, {static_cast<std::uint64_t>(h), static_cast<std::uint64_t>(s)}));
            ModelRecord rec;
            rec.model_id = model_id_for(h, s);
            rec.hyper_index = h;
            rec.seed_index = s;
            rec.response = simulate_encoder(grid, cfg);
            rec.metadata["encoder"] = encoder_config_to_json(cfg);
            rec.metadata["mixing_angle"] = std::to_string(q.mixing_angle);
            rec.metadata["noise_sd"] = std::to_string(q.noise_sd);
            rec.metadata["dead_latent_count"] = std::to_string(q.dead_latent_count);
            records.push_back(std::move(rec));
        }
    }
    Metadata meta{{"generator", "simulate_population"},
                  {"hypers", std::to_string(hypers)},
                  {"seeds", std::to_string(seeds)},
                  {"seed", std::to_string(seed)}};
    return ModelSet(std::move(records), grid, std::move(meta));
}

/// Factor cardinalities of the standard benchmark datasets and small
/// variants sized for quick runs.
inline FactorSpec preset(const std::string& name) {
    if (name == "dsprites")
        return FactorSpec({{"shape", 3}, {"pos_x", 32}, {"pos_y", 32}, {"scale", 6}, {"orientation", 40, true}});
    if (name == "shapes3d")
        return FactorSpec({{"floor_hue", 10, true}, {"wall_hue", 10, true}, {"object_hue", 10, true},
                           {"scale", 8}, {"shape", 4}, {"orientation", 15}});
    if (name == "cars3d") return FactorSpec({{"car_model", 199}, {"rotation", 24, true}});
    if (name == "dsprites-mini")
        return FactorSpec({{"shape", 3}, {"pos_x", 8}, {"pos_y", 8}, {"scale", 6}, {"orientation", 10, true}});
    if (name == "shapes3d-mini")
        return FactorSpec({{"floor_hue", 4, true}, {"wall_hue", 4, true}, {"object_hue", 4, true},
                           {"scale", 4}, {"shape", 4}, {"orientation", 4}});
    if (name == "grid4") return FactorSpec({{"f0", 10}, {"f1", 10}, {"f2", 10}, {"f3", 10}});
    throw ValidationError("unknown preset '" + name + "'");
}

inline std::vector<std::string> preset_names() {
    return {"dsprites", "shapes3d", "cars3d", "dsprites-mini", "shapes3d-mini", "grid4"};
}

}  // namespace udr::sim
