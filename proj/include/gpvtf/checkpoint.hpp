#pragma once

// Text archive of named matrices plus string metadata.
//
//   GPVTF-CHECKPOINT 1
//   meta <key> <value...>
//   tensor <name> <rows> <cols>
//   <rows lines of comma-separated values, shortest round-trip decimal>
//   end
//
// Names and keys contain no whitespace. Values round-trip bit-exactly.

#include <map>
#include <sstream>
#include <string>

#include "gpvtf/data.hpp"
#include "gpvtf/numeric.hpp"

namespace gpvtf {

inline constexpr const char* kCheckpointTag = "GPVTF-CHECKPOINT";
inline constexpr int kCheckpointVersion = 1;

struct Archive {
    std::map<std::string, std::string> meta;
    std::map<std::string, Matrix> tensors;

    const Matrix& tensor(const std::string& name) const {
        const auto it = tensors.find(name);
        if (it == tensors.end()) throw ParseError("checkpoint lacks tensor '" + name + "'");
        return it->second;
    }
};

inline void write_archive(std::ostream& out, const Archive& a) {
    out << kCheckpointTag << ' ' << kCheckpointVersion << '\n';
    for (const auto& [k, v] : a.meta) out << "meta " << k << ' ' << v << '\n';
    for (const auto& [name, m] : a.tensors) {
        out << "tensor " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
        for (std::size_t i = 0; i < m.rows(); ++i) {
            for (std::size_t j = 0; j < m.cols(); ++j) {
                if (j) out << ',';
                out << detail::format_double(m(i, j));
            }
            out << '\n';
        }
    }
    out << "end\n";
}

inline Archive read_archive(std::istream& in) {
    Archive a;
    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty checkpoint");
    {
        std::istringstream head(line);
        std::string tag;
        int version = 0;
        head >> tag >> version;
        if (tag != kCheckpointTag) throw ParseError("not a checkpoint (bad format tag)");
        if (version != kCheckpointVersion) {
            throw ParseError("unsupported checkpoint version " + std::to_string(version));
        }
    }
    while (std::getline(in, line)) {
        if (line == "end") return a;
        std::istringstream ls(line);
        std::string kind, name;
        ls >> kind >> name;
        if (kind == "meta") {
            std::string value;
            std::getline(ls >> std::ws, value);
            a.meta[name] = value;
        } else if (kind == "tensor") {
            std::size_t rows = 0, cols = 0;
            if (!(ls >> rows >> cols)) throw ParseError("bad tensor header: " + line);
            std::vector<double> values;
            values.reserve(rows * cols);
            for (std::size_t i = 0; i < rows; ++i) {
                if (!std::getline(in, line)) throw ParseError("truncated tensor '" + name + "'");
                std::string_view rest(line);
                for (std::size_t j = 0; j < cols; ++j) {
                    const auto comma = rest.find(',');
                    values.push_back(detail::parse_double(
                        rest.substr(0, comma), "tensor " + name + " row " + std::to_string(i)));
                    if (comma == std::string_view::npos) {
                        if (j + 1 != cols) throw ParseError("short row in tensor '" + name + "'");
                        break;
                    }
                    if (j + 1 == cols) throw ParseError("long row in tensor '" + name + "'");
                    rest.remove_prefix(comma + 1);
                }
            }
            a.tensors.emplace(name, Matrix(rows, cols, std::move(values)));
        } else if (!kind.empty()) {
            throw ParseError("unknown checkpoint record '" + kind + "'");
        }
    }
    throw ParseError("checkpoint missing 'end' record");
}

inline void save_archive(const std::string& path, const Archive& a) {
    auto out = detail::open_out(path);
    write_archive(out, a);
    if (!out) throw IoError("failed writing '" + path + "'");
}

inline Archive load_archive(const std::string& path) {
    auto in = detail::open_in(path);
    return read_archive(in);
}

}  // namespace gpvtf
