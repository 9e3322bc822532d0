#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "seqcls/data.hpp"
#include "seqcls/rng.hpp"

namespace seqcls {

/// Length of every generated scenario in seconds (16 h station-blackout
/// window). Flavor only; the classifier sees normalized values.
inline constexpr double kScenarioDurationS = 57600.0;

struct SynthConfig {
    std::size_t n_scenarios = 0;
    std::size_t seq_len = 200;
    double damage_fraction = 0.616;
    double noise_scale = 0.03;
    std::uint64_t seed = 42;
    std::vector<std::string> schema = standard_schema();

    void validate() const {
        if (n_scenarios < 1) throw ConfigError("synth: n_scenarios must be >= 1");
        if (seq_len < 2) throw ConfigError("synth: seq_len must be >= 2");
        if (damage_fraction < 0.0 || damage_fraction > 1.0) {
            throw ConfigError("synth: damage_fraction must be in [0, 1]");
        }
        // The label margins are built from (1 +- noise_scale) envelopes around
        // the peak temperature; beyond 0.5 the envelopes cross the class
        // threshold and labels could no longer be guaranteed by construction.
        if (noise_scale < 0.0 || noise_scale > 0.5) {
            throw ConfigError("synth: noise_scale must be in [0, 0.5]");
        }
        if (schema.empty()) throw ConfigError("synth: schema must not be empty");
        const std::vector<std::string> known = standard_schema();
        for (const std::string& name : schema) {
            if (std::find(known.begin(), known.end(), name) == known.end()) {
                throw ConfigError("synth: unknown schema variable '" + name + "'");
            }
            if (std::count(schema.begin(), schema.end(), name) != 1) {
                throw ConfigError("synth: duplicate schema variable '" + name + "'");
            }
        }
    }
};

struct GenerationReport {
    std::size_t n_total = 0;
    std::size_t n_core_damage = 0;
    std::size_t n_ok = 0;
    std::size_t label_mismatches = 0;
};

struct GeneratedDataset {
    LabeledDataset dataset;
    std::vector<Label> intended;
    GenerationReport report;
};

namespace synth_detail {

inline double smoothstep01(double x) {
    x = std::clamp(x, 0.0, 1.0);
    return x * x * (3.0 - 2.0 * x);
}

/// Monotone ramp from 0 at tau=t0 to 1 at tau=t1, flat outside.
inline double ramp(double tau, double t0, double t1) {
    return smoothstep01((tau - t0) / (t1 - t0));
}

inline double sym(Rng& rng) { return rng.uniform(-1.0, 1.0); }

/// Parameter spread factor. Grows linearly with the noise scale and saturates
/// at 1, so zero noise collapses every scenario of a class onto one backbone.
inline double spread(double noise_scale) { return std::min(8.0 * noise_scale, 1.0); }

/// Smooth bounded signal: sum of 4 sinusoids with |amplitudes| summing to 1,
/// so |eval| <= 1 and the multiplicative factor stays inside 1 +- scale.
struct NoiseProcess {
    static constexpr int kWaves = 4;
    double amp[kWaves];
    double freq[kWaves];
    double phase[kWaves];

    static NoiseProcess draw(Rng& rng) {
        NoiseProcess p;
        double total = 0.0;
        for (int k = 0; k < kWaves; ++k) {
            p.amp[k] = rng.uniform(0.3, 1.0);
            p.freq[k] = rng.uniform(0.5, 8.0);
            p.phase[k] = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
            total += p.amp[k];
        }
        for (int k = 0; k < kWaves; ++k) p.amp[k] /= total;
        return p;
    }

    double eval(double tau) const {
        double s = 0.0;
        for (int k = 0; k < kWaves; ++k) {
            s += amp[k] * std::sin(2.0 * 3.14159265358979323846 * freq[k] * tau + phase[k]);
        }
        return s;
    }
};

inline void apply_noise(std::vector<double>& values, Rng& rng, double scale) {
    const NoiseProcess p = NoiseProcess::draw(rng);
    const std::size_t n = values.size();
    for (std::size_t j = 0; j < n; ++j) {
        const double tau = static_cast<double>(j) / static_cast<double>(n - 1);
        values[j] *= 1.0 + scale * p.eval(tau);
    }
}

/// Trajectory parameters for one scenario. Every field is a fixed center
/// nudged by at most spread(noise_scale), so they are deterministic per class
/// when noise_scale is zero.
struct ScenarioShape {
    bool damage = false;
    double onset = 0.5;      // regime-change time as a fraction of the span
    double recovery = 0.62;  // OK class only: when mitigation takes hold
    double t_start = 560.0;  // initial cladding temperature, degF
    double t_peak = 0.0;
    double peak_time = 0.0;
    double t_cooled = 640.0;
};

inline ScenarioShape draw_shape(Rng& rng, bool damage, double ns) {
    const double sp = spread(ns);
    ScenarioShape s;
    s.damage = damage;
    s.onset = 0.5 + 0.25 * sp * sym(rng);  // middle half of the span at full spread
    s.t_start = 560.0 * (1.0 + 0.04 * sp * sym(rng));
    if (damage) {
        s.t_peak = std::max(2600.0 * (1.0 + 0.08 * sp * sym(rng)), 2250.0 / (1.0 - ns));
        s.peak_time = std::min(s.onset + 0.30 * (1.0 + 0.3 * sp * sym(rng)), 0.97);
    } else {
        s.t_peak = std::min(1500.0 * (1.0 + 0.12 * sp * sym(rng)), 1950.0 / (1.0 + ns));
        s.recovery = std::min(s.onset + 0.12 * (1.0 + 0.5 * sp * sym(rng)), 0.93);
        s.t_cooled = 640.0 * (1.0 + 0.05 * sp * sym(rng));
    }
    return s;
}

inline std::vector<double> tau_grid(std::size_t len) {
    std::vector<double> tau(len);
    for (std::size_t j = 0; j < len; ++j) {
        tau[j] = static_cast<double>(j) / static_cast<double>(len - 1);
    }
    return tau;
}

/// Peak cladding temperature before noise. Damage: monotone ramp from the
/// operating level through the 2100 degF limit to t_peak, then hold. OK:
/// ramp to a bounded peak, then exponential cooldown.
inline std::vector<double> base_pct(const ScenarioShape& s, const std::vector<double>& tau) {
    std::vector<double> v(tau.size());
    for (std::size_t j = 0; j < tau.size(); ++j) {
        const double t = tau[j];
        if (s.damage) {
            v[j] = s.t_start + (s.t_peak - s.t_start) * ramp(t, s.onset, s.peak_time);
        } else if (t <= s.recovery) {
            v[j] = s.t_start + (s.t_peak - s.t_start) * ramp(t, s.onset, s.recovery);
        } else {
            const double z = (t - s.recovery) / (1.0 - s.recovery);
            v[j] = s.t_cooled + (s.t_peak - s.t_cooled) * std::exp(-3.0 * z);
        }
    }
    return v;
}

/// Decay toward floor_frac after onset (damage behavior for inventories,
/// subcooling, break flow).
inline std::vector<double> decay_channel(double level, double floor_frac, double rate,
                                         const ScenarioShape& s, const std::vector<double>& tau) {
    std::vector<double> v(tau.size());
    for (std::size_t j = 0; j < tau.size(); ++j) {
        const double t = tau[j];
        if (t <= s.onset) {
            v[j] = level;
        } else {
            const double z = (t - s.onset) / (1.0 - s.onset);
            v[j] = level * (floor_frac + (1.0 - floor_frac) * std::exp(-rate * z));
        }
    }
    return v;
}

/// Dip to dip_frac between onset and recovery, then climb back to rec_frac
/// (OK behavior: the plant stabilizes).
inline std::vector<double> dip_recover_channel(double level, double dip_frac, double rec_frac,
                                               const ScenarioShape& s,
                                               const std::vector<double>& tau) {
    std::vector<double> v(tau.size());
    for (std::size_t j = 0; j < tau.size(); ++j) {
        const double t = tau[j];
        double frac = 1.0;
        if (t <= s.recovery) {
            frac = 1.0 + (dip_frac - 1.0) * ramp(t, s.onset, s.recovery);
        } else {
            frac = dip_frac + (rec_frac - dip_frac) * ramp(t, s.recovery, 1.0);
        }
        v[j] = level * frac;
    }
    return v;
}

} // namespace synth_detail

/// Generate one scenario from its derived seed. Column order follows the
/// standard schema; callers select/reorder afterwards. Exposed separately so
/// per-index determinism is directly testable.
inline Scenario generate_scenario(const SynthConfig& cfg, std::size_t index, bool& damage_out) {
    using namespace synth_detail;
    Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(index)));
    const double ns = cfg.noise_scale;
    const double sp = spread(ns);
    const bool damage = rng.uniform() < cfg.damage_fraction;
    damage_out = damage;

    const ScenarioShape shape = draw_shape(rng, damage, ns);
    const std::vector<double> tau = tau_grid(cfg.seq_len);
    const std::size_t len = cfg.seq_len;

    // PCT and its derived channels. The running maximum is taken after noise
    // so maxPCTdegF is nondecreasing over the values actually emitted.
    std::vector<double> pct_f = base_pct(shape, tau);
    apply_noise(pct_f, rng, ns);
    std::vector<double> max_pct_f(len);
    double running = -1e300;
    for (std::size_t j = 0; j < len; ++j) {
        running = std::max(running, pct_f[j]);
        max_pct_f[j] = running;
    }
    std::vector<double> pct_k(len), max_pct_k(len);
    for (std::size_t j = 0; j < len; ++j) {
        pct_k[j] = (pct_f[j] + 459.67) / 1.8;
        max_pct_k[j] = (max_pct_f[j] + 459.67) / 1.8;
    }

    // Cumulative hydrogen from cladding oxidation: zero unless the core
    // degrades, then a ramp that levels off.
    std::vector<double> hydrogen(len, 0.0);
    if (damage) {
        const double h_total = 280.0 * (1.0 + 0.5 * sp * sym(rng));
        for (std::size_t j = 0; j < len; ++j) {
            hydrogen[j] = h_total * ramp(tau[j], shape.onset, 0.98);
        }
        apply_noise(hydrogen, rng, ns);
    }

    // Operator recovery actuation: stays 0 when the core is lost, steps to 1
    // at the recovery time otherwise.
    std::vector<double> cntrlvar(len, 0.0);
    if (!damage) {
        for (std::size_t j = 0; j < len; ++j) {
            cntrlvar[j] = tau[j] >= shape.recovery ? 1.0 : 0.0;
        }
        apply_noise(cntrlvar, rng, ns);
    }

    // Steam generator inventories: boil off for damage, dip and refill for OK.
    std::vector<std::vector<double>> inventories;
    for (int sg = 0; sg < 3; ++sg) {
        const double level = 50000.0 * (1.0 + 0.06 * sp * sym(rng));
        std::vector<double> inv;
        if (damage) {
            const double floor_frac = 0.05 * (1.0 + 0.5 * sp * sym(rng));
            inv = decay_channel(level, floor_frac, 4.0, shape, tau);
        } else {
            const double dip = 0.50 * (1.0 + 0.2 * sp * sym(rng));
            const double rec = 0.90 * (1.0 + 0.05 * sp * sym(rng));
            inv = dip_recover_channel(level, dip, rec, shape, tau);
        }
        apply_noise(inv, rng, ns);
        inventories.push_back(std::move(inv));
    }

    // Break volumetric flow: jumps at onset; persists for damage, is isolated
    // away for OK.
    std::vector<double> flow(len, 0.0);
    {
        const double f0 = (damage ? 100.0 : 30.0) * (1.0 + 0.15 * sp * sym(rng));
        for (std::size_t j = 0; j < len; ++j) {
            const double t = tau[j];
            const double open = ramp(t, shape.onset, std::min(shape.onset + 0.02, 0.999));
            double level = f0 * open;
            if (t > shape.onset) {
                const double z = (t - shape.onset) / (1.0 - shape.onset);
                if (damage) {
                    level = f0 * open * (0.6 + 0.4 * std::exp(-2.0 * z));
                } else {
                    const double cut = ramp(t, shape.recovery, std::min(shape.recovery + 0.1, 0.999));
                    level = f0 * open * ((1.0 - cut) + cut * 0.02) * std::exp(-1.0 * z);
                }
            }
            flow[j] = level;
        }
        apply_noise(flow, rng, ns);
    }

    // Cold-leg subcooling margins: collapse for damage, recover for OK.
    std::vector<std::vector<double>> subcooling;
    for (int cl = 0; cl < 4; ++cl) {
        const double level = 28.0 * (1.0 + 0.15 * sp * sym(rng));
        std::vector<double> sub;
        if (damage) {
            const double floor_frac = 0.02 * (1.0 + 0.5 * sp * sym(rng));
            sub = decay_channel(level, floor_frac, 5.0, shape, tau);
        } else {
            const double dip = 0.20 * (1.0 + 0.3 * sp * sym(rng));
            const double rec = 0.85 * (1.0 + 0.08 * sp * sym(rng));
            sub = dip_recover_channel(level, dip, rec, shape, tau);
        }
        apply_noise(sub, rng, ns);
        subcooling.push_back(std::move(sub));
    }

    std::vector<const std::vector<double>*> columns = {
        &pct_k, &max_pct_k, &pct_f, &max_pct_f, &hydrogen, &cntrlvar,
        &inventories[0], &inventories[1], &inventories[2], &flow,
        &subcooling[0], &subcooling[1], &subcooling[2], &subcooling[3]};
    const std::vector<std::string> full = standard_schema();

    Scenario s;
    char id[32];
    std::snprintf(id, sizeof(id), "scn-%08zu", index);
    s.id = id;
    s.var_names = cfg.schema;
    s.time_stamps.resize(len);
    for (std::size_t j = 0; j < len; ++j) s.time_stamps[j] = tau[j] * kScenarioDurationS;
    s.values = Tensor(len, cfg.schema.size());
    for (std::size_t m = 0; m < cfg.schema.size(); ++m) {
        const auto it = std::find(full.begin(), full.end(), cfg.schema[m]);
        const std::vector<double>& col = *columns[static_cast<std::size_t>(it - full.begin())];
        for (std::size_t j = 0; j < len; ++j) s.values(j, m) = col[j];
    }
    s.validate();
    return s;
}

/// Generate the whole dataset. Labels in the result are recomputed from the
/// emitted maxPCTdegF values whenever that channel is present; the report
/// counts any disagreement with the intended class (zero by construction).
inline GeneratedDataset generate_dataset(const SynthConfig& cfg) {
    cfg.validate();
    GeneratedDataset out;
    const bool has_label_var =
        std::find(cfg.schema.begin(), cfg.schema.end(), kLabelVariable) != cfg.schema.end();
    for (std::size_t i = 0; i < cfg.n_scenarios; ++i) {
        bool damage = false;
        Scenario s = generate_scenario(cfg, i, damage);
        const Label intended = damage ? Label::CoreDamage : Label::Ok;
        Label final_label = intended;
        if (has_label_var) {
            final_label = assign_label(s);
            if (final_label != intended) ++out.report.label_mismatches;
        }
        out.intended.push_back(intended);
        out.dataset.push(std::move(s), final_label);
        if (final_label == Label::CoreDamage) ++out.report.n_core_damage;
        else ++out.report.n_ok;
    }
    out.report.n_total = cfg.n_scenarios;
    return out;
}

} // namespace seqcls
