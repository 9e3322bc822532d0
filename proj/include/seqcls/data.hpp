#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "seqcls/errors.hpp"
#include "seqcls/rng.hpp"
#include "seqcls/tensor.hpp"

namespace seqcls {

/// Outcome classes. The numeric values are part of every on-disk format.
enum class Label : int { CoreDamage = 0, Ok = 1 };

inline const char* label_name(Label l) {
    return l == Label::CoreDamage ? "CORE_DAMAGE" : "OK";
}

/// The running-maximum clad-temperature channel that decides the label,
/// and the default decision threshold in degrees Fahrenheit.
inline constexpr const char* kLabelVariable = "maxPCTdegF";
inline constexpr double kLabelThresholdDegF = 2100.0;

/// The 14 state variables of the standard plant schema, in canonical order.
inline const std::vector<std::string>& standard_schema() {
    static const std::vector<std::string> names = {
        "PCTdegK",
        "maxPCTdegK",
        "PCTdegF",
        "maxPCTdegF",
        "totGeneratedHydrogen",
        "cntrlvar 601",
        "SG2CoolantInventory",
        "SG3CoolantInventory",
        "SG4CoolantInventory",
        "i_volflowSRCP1LOCA",
        "subcoolingCL1",
        "subcoolingCL2",
        "subcoolingCL3",
        "subcoolingCL4",
    };
    return names;
}

/// One accident trajectory: L time steps by M named state variables,
/// time-major (row = time step, column = variable).
struct Scenario {
    std::string id;
    std::vector<std::string> var_names;
    Tensor values;                    // L x M
    std::vector<double> time_stamps;  // length L, strictly increasing, seconds

    std::size_t length() const { return values.rows(); }
    std::size_t n_vars() const { return values.cols(); }

    /// Column index of a variable; throws SchemaError if absent.
    std::size_t column(const std::string& name) const {
        for (std::size_t i = 0; i < var_names.size(); ++i) {
            if (var_names[i] == name) return i;
        }
        throw SchemaError("scenario '" + id + "' has no variable '" + name + "'");
    }

    void validate() const {
        if (length() < 2) {
            throw ContractError("scenario '" + id + "': needs at least 2 time steps");
        }
        if (n_vars() < 1) {
            throw ContractError("scenario '" + id + "': needs at least 1 variable");
        }
        if (var_names.size() != n_vars()) {
            throw DimensionError("scenario '" + id + "': " + std::to_string(var_names.size()) +
                                 " names for " + std::to_string(n_vars()) + " columns");
        }
        if (time_stamps.size() != length()) {
            throw DimensionError("scenario '" + id + "': " + std::to_string(time_stamps.size()) +
                                 " time stamps for " + std::to_string(length()) + " rows");
        }
        for (std::size_t t = 1; t < time_stamps.size(); ++t) {
            if (!(time_stamps[t] > time_stamps[t - 1])) {
                throw ContractError("scenario '" + id + "': time stamps not strictly increasing at row " +
                                    std::to_string(t));
            }
        }
        std::set<std::string> seen(var_names.begin(), var_names.end());
        if (seen.size() != var_names.size()) {
            throw SchemaError("scenario '" + id + "': duplicate variable names");
        }
        if (!values.all_finite()) {
            throw ContractError("scenario '" + id + "': non-finite values");
        }
    }
};

/// Per-variable min/max captured at normalization time, for round-tripping.
struct NormalizationRecord {
    std::vector<std::string> var_names;
    std::vector<double> mins;
    std::vector<double> maxs;
};

/// Map every variable to [0,1] by its own min/max over the scenario's full
/// time length. A constant variable (max == min) maps to all zeros.
inline std::pair<Scenario, NormalizationRecord> normalize_scenario(const Scenario& s) {
    Scenario out = s;
    NormalizationRecord rec;
    rec.var_names = s.var_names;
    rec.mins.resize(s.n_vars());
    rec.maxs.resize(s.n_vars());
    for (std::size_t m = 0; m < s.n_vars(); ++m) {
        double lo = s.values(0, m), hi = s.values(0, m);
        for (std::size_t t = 1; t < s.length(); ++t) {
            lo = std::min(lo, s.values(t, m));
            hi = std::max(hi, s.values(t, m));
        }
        rec.mins[m] = lo;
        rec.maxs[m] = hi;
        if (hi > lo) {
            // Dividing by the range (not multiplying by its reciprocal) makes
            // the column minimum exactly 0.0 and the maximum exactly 1.0.
            const double range = hi - lo;
            for (std::size_t t = 0; t < s.length(); ++t) {
                out.values(t, m) = (s.values(t, m) - lo) / range;
            }
        } else {
            for (std::size_t t = 0; t < s.length(); ++t) {
                out.values(t, m) = 0.0;
            }
        }
    }
    return {std::move(out), std::move(rec)};
}

/// Inverse of normalize_scenario for the same record: x*(max-min)+min.
inline Scenario denormalize(const Scenario& s, const NormalizationRecord& rec) {
    if (rec.var_names != s.var_names) {
        throw ContractError("denormalize: record schema does not match scenario '" + s.id + "'");
    }
    Scenario out = s;
    for (std::size_t m = 0; m < s.n_vars(); ++m) {
        const double span = rec.maxs[m] - rec.mins[m];
        for (std::size_t t = 0; t < s.length(); ++t) {
            out.values(t, m) = s.values(t, m) * span + rec.mins[m];
        }
    }
    return out;
}

/// Consequence rule: OK iff the final maxPCTdegF value is strictly below the
/// threshold, CORE_DAMAGE otherwise. Expects pre-normalization values.
inline Label assign_label(const Scenario& s, double threshold = kLabelThresholdDegF) {
    const std::size_t m = s.column(kLabelVariable);
    const double final_value = s.values(s.length() - 1, m);
    return final_value < threshold ? Label::Ok : Label::CoreDamage;
}

/// Scenarios plus their (recomputed, never trusted-from-file) labels.
struct LabeledDataset {
    std::vector<Scenario> scenarios;
    std::vector<Label> labels;

    std::size_t size() const { return scenarios.size(); }
    void push(Scenario s, Label l) {
        scenarios.push_back(std::move(s));
        labels.push_back(l);
    }
};

enum class Split : int { Train = 0, Test = 1, Validation = 2 };

inline const char* split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Test: return "test";
        default: return "validation";
    }
}

inline Split parse_split(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "test") return Split::Test;
    if (s == "validation") return Split::Validation;
    throw ParseError("unknown split tag '" + s + "'");
}

struct SplitFractions {
    double train = 0.64;
    double test = 0.20;
    double validation = 0.16;
};

/// Per-scenario split tags, aligned with the dataset order.
struct SplitAssignment {
    std::vector<Split> tags;

    std::size_t count(Split s) const {
        return static_cast<std::size_t>(std::count(tags.begin(), tags.end(), s));
    }
    std::vector<std::size_t> indices(Split s) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < tags.size(); ++i) {
            if (tags[i] == s) out.push_back(i);
        }
        return out;
    }
};

/// Seeded uniform shuffle, then floor(N*f) scenarios per split with the
/// remainder going to training. Deterministic for a fixed seed.
inline SplitAssignment split_dataset(std::size_t n, const SplitFractions& f, std::uint64_t seed) {
    if (n == 0) {
        throw ContractError("split_dataset: empty dataset");
    }
    if (!(f.train > 0.0) || !(f.test > 0.0) || !(f.validation > 0.0) ||
        std::abs(f.train + f.test + f.validation - 1.0) > 1e-9) {
        throw ContractError("split_dataset: fractions must be positive and sum to 1");
    }
    const double nd = static_cast<double>(n);
    std::size_t n_train = static_cast<std::size_t>(std::floor(nd * f.train));
    const std::size_t n_test = static_cast<std::size_t>(std::floor(nd * f.test));
    const std::size_t n_val = static_cast<std::size_t>(std::floor(nd * f.validation));
    n_train += n - (n_train + n_test + n_val);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(order);

    SplitAssignment out;
    out.tags.assign(n, Split::Train);
    for (std::size_t i = 0; i < n; ++i) {
        if (i < n_train) {
            out.tags[order[i]] = Split::Train;
        } else if (i < n_train + n_test) {
            out.tags[order[i]] = Split::Test;
        } else {
            out.tags[order[i]] = Split::Validation;
        }
    }
    return out;
}

inline SplitAssignment split_dataset(const LabeledDataset& ds, const SplitFractions& f,
                                     std::uint64_t seed) {
    return split_dataset(ds.size(), f, seed);
}

/// Linear interpolation onto L_target uniform time stamps spanning the
/// original [t_first, t_last]; endpoints are preserved exactly.
inline Scenario resample(const Scenario& s, std::size_t target_len) {
    if (target_len < 2) {
        throw ContractError("resample: target length must be at least 2");
    }
    const std::size_t len = s.length();
    const double t0 = s.time_stamps.front();
    const double t1 = s.time_stamps.back();
    Scenario out;
    out.id = s.id;
    out.var_names = s.var_names;
    out.values = Tensor(target_len, s.n_vars());
    out.time_stamps.resize(target_len);

    const double step = (t1 - t0) / static_cast<double>(target_len - 1);
    std::size_t seg = 0;  // time stamps are monotone, so the segment cursor only advances
    for (std::size_t j = 0; j < target_len; ++j) {
        double t;
        if (j == 0) {
            t = t0;
        } else if (j == target_len - 1) {
            t = t1;
        } else {
            t = t0 + step * static_cast<double>(j);
        }
        out.time_stamps[j] = t;
        while (seg + 2 < len && s.time_stamps[seg + 1] < t) ++seg;
        const double a = s.time_stamps[seg];
        const double b = s.time_stamps[seg + 1];
        const double w = std::clamp((t - a) / (b - a), 0.0, 1.0);
        for (std::size_t m = 0; m < s.n_vars(); ++m) {
            out.values(j, m) = s.values(seg, m) + w * (s.values(seg + 1, m) - s.values(seg, m));
        }
    }
    // end points copied verbatim so resampling cannot perturb the label
    for (std::size_t m = 0; m < s.n_vars(); ++m) {
        out.values(0, m) = s.values(0, m);
        out.values(target_len - 1, m) = s.values(len - 1, m);
    }
    return out;
}

} // namespace seqcls
