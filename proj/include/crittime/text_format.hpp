#pragma once
// Plain-text records for sets, matrices and scalars.
//
//   # comment
//   scalar <name> <value>
//   text <name> <rest of line>
//   matrix <name> <rows> <cols> <row-major values>
//   set <name> <dim>
//   qc <dim> <(dim+1)^2 row-major values>
//   qce <dim> <(dim+1)^2 row-major values>
//   end
//
// Key-value files (parameters, run configs) are separate: `key = value` lines.

#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "crittime/qc_sets.hpp"

namespace crittime {

struct Document {
    std::map<std::string, double> scalars;
    std::map<std::string, std::string> texts;
    std::map<std::string, Matrix> matrices;
    std::map<std::string, SetDescription> sets;

    const Matrix& matrix(const std::string& name) const {
        auto it = matrices.find(name);
        if (it == matrices.end()) throw FormatError("missing matrix record '" + name + "'");
        return it->second;
    }
    const SetDescription& set(const std::string& name) const {
        auto it = sets.find(name);
        if (it == sets.end()) throw FormatError("missing set record '" + name + "'");
        return it->second;
    }
    double scalar(const std::string& name) const {
        auto it = scalars.find(name);
        if (it == scalars.end()) throw FormatError("missing scalar record '" + name + "'");
        return it->second;
    }
};

namespace detail {

inline void write_values(std::ostream& os, const Matrix& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) os << ' ' << m(i, j);
    }
}

inline Matrix read_values(std::istringstream& is, Eigen::Index rows, Eigen::Index cols, int line) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) {
            std::string tok;
            if (!(is >> tok)) throw FormatError("line " + std::to_string(line) + ": too few values");
            try {
                std::size_t used = 0;
                m(i, j) = std::stod(tok, &used);
                if (used != tok.size()) throw std::invalid_argument(tok);
            } catch (const std::exception&) {
                throw FormatError("line " + std::to_string(line) + ": bad number '" + tok + "'");
            }
        }
    }
    std::string extra;
    if (is >> extra) throw FormatError("line " + std::to_string(line) + ": too many values");
    return m;
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace detail

inline void write_set(std::ostream& os, const std::string& name, const SetDescription& set) {
    os << "set " << name << ' ' << set.dim() << '\n';
    for (const auto& f : set.qcs()) {
        os << "qc " << f.dim();
        detail::write_values(os, f.matrix());
        os << '\n';
    }
    for (const auto& f : set.qces()) {
        os << "qce " << f.dim();
        detail::write_values(os, f.matrix());
        os << '\n';
    }
    os << "end\n";
}

inline void write_document(std::ostream& os, const Document& doc) {
    const auto old_prec = os.precision(17);
    for (const auto& [name, v] : doc.scalars) os << "scalar " << name << ' ' << v << '\n';
    for (const auto& [name, t] : doc.texts) os << "text " << name << ' ' << t << '\n';
    for (const auto& [name, m] : doc.matrices) {
        os << "matrix " << name << ' ' << m.rows() << ' ' << m.cols();
        detail::write_values(os, m);
        os << '\n';
    }
    for (const auto& [name, s] : doc.sets) write_set(os, name, s);
    os.precision(old_prec);
}

inline Document read_document(std::istream& is) {
    Document doc;
    std::string raw;
    int line_no = 0;
    struct OpenSet {
        std::string name;
        int dim;
        std::vector<QuadraticForm> qcs, qces;
    };
    std::optional<OpenSet> open;
    auto fail = [&](const std::string& msg) {
        throw FormatError("line " + std::to_string(line_no) + ": " + msg);
    };
    while (std::getline(is, raw)) {
        ++line_no;
        const std::string line = detail::trim(raw);
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string kind;
        ls >> kind;
        if (open) {
            if (kind == "end") {
                try {
                    doc.sets.insert_or_assign(open->name, SetDescription(open->dim, std::move(open->qcs),
                                                                         std::move(open->qces)));
                } catch (const ContractViolation& e) {
                    fail(e.what());
                }
                open.reset();
            } else if (kind == "qc" || kind == "qce") {
                int dim = 0;
                if (!(ls >> dim) || dim != open->dim) fail("record dim does not match set dim");
                Matrix m = detail::read_values(ls, dim + 1, dim + 1, line_no);
                try {
                    (kind == "qc" ? open->qcs : open->qces).emplace_back(dim, std::move(m));
                } catch (const ContractViolation& e) {
                    fail(e.what());
                }
            } else {
                fail("unexpected '" + kind + "' inside set block");
            }
            continue;
        }
        std::string name;
        if (!(ls >> name)) fail("missing record name");
        if (kind == "scalar") {
            doc.scalars[name] = detail::read_values(ls, 1, 1, line_no)(0, 0);
        } else if (kind == "text") {
            std::string rest;
            std::getline(ls, rest);
            doc.texts[name] = detail::trim(rest);
        } else if (kind == "matrix") {
            Eigen::Index r = 0, c = 0;
            if (!(ls >> r >> c) || r < 0 || c < 0) fail("bad matrix shape");
            doc.matrices.insert_or_assign(name, detail::read_values(ls, r, c, line_no));
        } else if (kind == "set") {
            int dim = 0;
            if (!(ls >> dim) || dim <= 0) fail("bad set dimension");
            open = OpenSet{name, dim, {}, {}};
        } else {
            fail("unknown record kind '" + kind + "'");
        }
    }
    if (open) throw FormatError("unterminated set block '" + open->name + "'");
    return doc;
}

inline Document load_document(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open '" + path + "'");
    return read_document(in);
}

inline void save_document(const std::string& path, const Document& doc) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write '" + path + "'");
    write_document(out, doc);
}

using KeyValues = std::map<std::string, std::string>;

inline KeyValues read_key_values(std::istream& is) {
    KeyValues kv;
    std::string raw;
    int line_no = 0;
    while (std::getline(is, raw)) {
        ++line_no;
        const auto hash = raw.find('#');
        const std::string line = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw FormatError("line " + std::to_string(line_no) + ": expected key = value");
        }
        const std::string key = detail::trim(line.substr(0, eq));
        if (key.empty()) throw FormatError("line " + std::to_string(line_no) + ": empty key");
        kv[key] = detail::trim(line.substr(eq + 1));
    }
    return kv;
}

inline KeyValues load_key_values(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open '" + path + "'");
    return read_key_values(in);
}

inline double parse_double(const std::string& s, const std::string& what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (detail::trim(s.substr(used)).empty()) return v;
    } catch (const std::exception&) {
    }
    throw FormatError("bad number for " + what + ": '" + s + "'");
}

}  // namespace crittime
