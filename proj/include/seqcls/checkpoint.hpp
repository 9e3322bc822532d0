#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "seqcls/csv_io.hpp"
#include "seqcls/model.hpp"

namespace seqcls {

inline constexpr const char* kCheckpointMagic = "SEQV1";

/// Plain-text checkpoint: magic line, config key/value lines, then each
/// parameter tensor as a header line plus one line per row. Values are
/// printed with 17 significant digits so a save/load cycle is bit exact.
inline void save_checkpoint(const std::string& path, const Model& m) {
    std::ofstream out(path);
    if (!out) {
        throw ParseError("cannot open checkpoint for writing: " + path);
    }
    const ModelConfig& c = m.config;
    out << kCheckpointMagic << "\n";
    out << "arch " << arch_name(m.arch) << "\n";
    out << "n_layers " << c.n_layers << "\n";
    out << "d_model " << c.d_model << "\n";
    out << "n_heads " << c.n_heads << "\n";
    out << "ffn_dim " << c.ffn_dim << "\n";
    out << "seq_len " << c.seq_len << "\n";
    out << "n_vars " << c.n_vars << "\n";
    out << "pooling " << pooling_name(c.pooling) << "\n";
    out << "n_classes " << c.n_classes << "\n";
    out << "positional_encoding " << (c.positional_encoding ? 1 : 0) << "\n";
    out << "kernel_width " << c.kernel_width << "\n";
    out << "params " << m.params.size() << "\n";
    for (std::size_t i = 0; i < m.params.size(); ++i) {
        const Tensor& t = m.params.node(i).value;
        out << "param " << m.params.name(i) << " " << t.rows() << " " << t.cols() << "\n";
        for (std::size_t r = 0; r < t.rows(); ++r) {
            const double* row = t.row_ptr(r);
            for (std::size_t col = 0; col < t.cols(); ++col) {
                if (col) out << " ";
                out << format_double(row[col]);
            }
            out << "\n";
        }
    }
    if (!out) {
        throw ParseError("write failed for checkpoint: " + path);
    }
}

namespace detail {

inline std::string checkpoint_line(std::istream& in, const std::string& path) {
    std::string line;
    if (!std::getline(in, line)) {
        throw ParseError("truncated checkpoint: " + path);
    }
    return chomp(line);
}

inline std::size_t parse_count(const std::string& text, const std::string& what) {
    try {
        const long long v = std::stoll(text);
        if (v < 0) throw std::out_of_range("negative");
        return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
        throw ParseError("bad " + what + " in checkpoint: '" + text + "'");
    }
}

} // namespace detail

inline Model load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError("cannot open checkpoint: " + path);
    }
    if (detail::checkpoint_line(in, path) != kCheckpointMagic) {
        throw ParseError("not a " + std::string(kCheckpointMagic) + " checkpoint: " + path);
    }

    Model m;
    ModelConfig c;
    std::size_t n_params = 0;
    bool saw_params = false;
    while (!saw_params) {
        std::istringstream fields(detail::checkpoint_line(in, path));
        std::string key, value;
        if (!(fields >> key >> value)) {
            throw ParseError("malformed checkpoint header line in " + path);
        }
        if (key == "arch") m.arch = parse_arch(value);
        else if (key == "n_layers") c.n_layers = detail::parse_count(value, key);
        else if (key == "d_model") c.d_model = detail::parse_count(value, key);
        else if (key == "n_heads") c.n_heads = detail::parse_count(value, key);
        else if (key == "ffn_dim") c.ffn_dim = detail::parse_count(value, key);
        else if (key == "seq_len") c.seq_len = detail::parse_count(value, key);
        else if (key == "n_vars") c.n_vars = detail::parse_count(value, key);
        else if (key == "pooling") c.pooling = parse_pooling(value);
        else if (key == "n_classes") c.n_classes = detail::parse_count(value, key);
        else if (key == "positional_encoding") c.positional_encoding = value != "0";
        else if (key == "kernel_width") c.kernel_width = detail::parse_count(value, key);
        else if (key == "params") {
            n_params = detail::parse_count(value, key);
            saw_params = true;
        } else {
            throw ParseError("unknown checkpoint field '" + key + "' in " + path);
        }
    }
    c.validate();
    m.config = c;

    for (std::size_t i = 0; i < n_params; ++i) {
        std::istringstream header(detail::checkpoint_line(in, path));
        std::string tag, name, rows_text, cols_text;
        if (!(header >> tag >> name >> rows_text >> cols_text) || tag != "param") {
            throw ParseError("expected 'param <name> <rows> <cols>' in " + path);
        }
        const std::size_t rows = detail::parse_count(rows_text, "rows");
        const std::size_t cols = detail::parse_count(cols_text, "cols");
        if (rows == 0 || cols == 0) {
            throw ParseError("empty tensor for parameter '" + name + "' in " + path);
        }
        Tensor t(rows, cols);
        for (std::size_t r = 0; r < rows; ++r) {
            std::istringstream row(detail::checkpoint_line(in, path));
            std::string cell;
            for (std::size_t col = 0; col < cols; ++col) {
                if (!(row >> cell)) {
                    throw ParseError("short row for parameter '" + name + "' in " + path);
                }
                t(r, col) = parse_double(cell, "checkpoint value for " + name);
            }
            std::string extra;
            if (row >> extra) {
                throw ParseError("trailing data in row of parameter '" + name + "' in " + path);
            }
        }
        m.params.add(name, t);
    }
    std::string leftover;
    if (std::getline(in, leftover)) {
        throw ParseError("trailing data after the last parameter in " + path);
    }
    return m;
}

} // namespace seqcls
