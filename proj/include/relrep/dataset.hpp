#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "relrep/common.hpp"

namespace relrep {

// Feature-vector dataset. Labels are evaluation-only and must never reach a
// training operation; vectors are stored at float32 precision so both file
// formats round-trip exactly.
struct Dataset {
    Eigen::MatrixXd vectors;              // N x d_in
    std::vector<int> labels;              // empty when unlabeled, else length N
    std::vector<std::string> label_names; // label id -> original name (may be empty)
    std::vector<std::uint32_t> ids;       // stable sample identifiers

    int size() const { return static_cast<int>(vectors.rows()); }
    int dim() const { return static_cast<int>(vectors.cols()); }
    bool has_labels() const { return !labels.empty(); }
};

struct SyntheticSpec {
    int num_classes = 2;
    int samples_per_class = 2;
    int dim = 2;
    double cluster_std = 1.0;
    std::uint64_t seed = 0;
};

enum class DatasetFormat { csv, raw_f32 };

namespace detail {

inline double quantize_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

inline void validate_dataset(const Dataset& d) {
    if (d.size() < 1) throw std::runtime_error("empty dataset");
    if (d.dim() < 1) throw std::runtime_error("dataset has zero feature dimension");
    if (!d.vectors.allFinite()) throw std::runtime_error("dataset contains non-finite values");
    if (d.has_labels() && static_cast<int>(d.labels.size()) != d.size())
        throw std::runtime_error("label count does not match sample count");
}

inline bool parse_double(const std::string& s, double& out) {
    const char* begin = s.c_str();
    char* end = nullptr;
    out = std::strtod(begin, &end);
    if (end == begin) return false;
    while (*end == ' ' || *end == '\t' || *end == '\r') ++end;
    return *end == '\0';
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    fields.push_back(cur);
    for (auto& f : fields) {
        std::size_t a = f.find_first_not_of(" \t");
        std::size_t b = f.find_last_not_of(" \t");
        f = (a == std::string::npos) ? std::string() : f.substr(a, b - a + 1);
    }
    return fields;
}

}  // namespace detail

// csv: optional '#' header lines, comma separated, trailing label column when
// the first data row's last field is non-numeric.
inline Dataset load_dataset_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);

    std::vector<std::vector<double>> rows;
    std::vector<std::string> row_labels;
    bool labeled = false;
    int expected_fields = -1;
    int row_index = 0;

    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        ++row_index;
        auto fields = detail::split_csv_line(line);
        if (expected_fields < 0) {
            expected_fields = static_cast<int>(fields.size());
            double tmp;
            labeled = expected_fields >= 2 && !detail::parse_double(fields.back(), tmp);
        }
        if (static_cast<int>(fields.size()) != expected_fields)
            throw std::runtime_error("row " + std::to_string(row_index) + ": expected " +
                                     std::to_string(expected_fields) + " fields, got " +
                                     std::to_string(fields.size()));
        int nfeat = expected_fields - (labeled ? 1 : 0);
        std::vector<double> row(static_cast<std::size_t>(nfeat));
        for (int j = 0; j < nfeat; ++j) {
            double v;
            if (!detail::parse_double(fields[static_cast<std::size_t>(j)], v))
                throw std::runtime_error("row " + std::to_string(row_index) +
                                         ": cannot parse value '" + fields[static_cast<std::size_t>(j)] + "'");
            row[static_cast<std::size_t>(j)] = detail::quantize_f32(v);
        }
        rows.push_back(std::move(row));
        if (labeled) row_labels.push_back(fields.back());
    }
    if (rows.empty()) throw std::runtime_error("empty dataset");

    Dataset d;
    d.vectors.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            d.vectors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];

    if (labeled) {
        d.labels.reserve(rows.size());
        for (const auto& name : row_labels) {
            int id = -1;
            for (std::size_t k = 0; k < d.label_names.size(); ++k)
                if (d.label_names[k] == name) { id = static_cast<int>(k); break; }
            if (id < 0) {
                id = static_cast<int>(d.label_names.size());
                d.label_names.push_back(name);
            }
            d.labels.push_back(id);
        }
    }
    d.ids.resize(rows.size());
    std::iota(d.ids.begin(), d.ids.end(), 0u);
    detail::validate_dataset(d);
    return d;
}

// raw_f32: "RRDS", u32 N, u32 d_in, u8 has_labels, N*d_in float32 row-major,
// then N u32 labels if present. Little endian throughout.
inline Dataset load_dataset_raw(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);

    char magic[4];
    if (!in.read(magic, 4)) throw std::runtime_error("empty dataset");
    if (std::memcmp(magic, "RRDS", 4) != 0) throw std::runtime_error("bad magic, not a RRDS file: " + path);

    std::uint32_t n = 0, dim = 0;
    std::uint8_t has_labels = 0;
    in.read(reinterpret_cast<char*>(&n), 4);
    in.read(reinterpret_cast<char*>(&dim), 4);
    in.read(reinterpret_cast<char*>(&has_labels), 1);
    if (!in) throw std::runtime_error("truncated header in " + path);
    if (n == 0 || dim == 0) throw std::runtime_error("empty dataset");

    std::vector<float> buf(static_cast<std::size_t>(n) * dim);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
    if (!in) throw std::runtime_error("truncated vector data in " + path);

    Dataset d;
    d.vectors.resize(n, dim);
    for (std::uint32_t i = 0; i < n; ++i)
        for (std::uint32_t j = 0; j < dim; ++j)
            d.vectors(i, j) = static_cast<double>(buf[static_cast<std::size_t>(i) * dim + j]);

    if (has_labels) {
        std::vector<std::uint32_t> lab(n);
        in.read(reinterpret_cast<char*>(lab.data()), static_cast<std::streamsize>(n) * 4);
        if (!in) throw std::runtime_error("truncated label data in " + path);
        d.labels.assign(lab.begin(), lab.end());
    }
    d.ids.resize(n);
    std::iota(d.ids.begin(), d.ids.end(), 0u);
    detail::validate_dataset(d);
    return d;
}

inline Dataset load_dataset(const std::string& path, DatasetFormat format) {
    return format == DatasetFormat::csv ? load_dataset_csv(path) : load_dataset_raw(path);
}

inline void save_dataset_csv(const Dataset& d, const std::string& path) {
    detail::validate_dataset(d);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (int i = 0; i < d.size(); ++i) {
        for (int j = 0; j < d.dim(); ++j) {
            if (j) out << ',';
            out << format_g9(d.vectors(i, j));
        }
        if (d.has_labels()) {
            int id = d.labels[static_cast<std::size_t>(i)];
            out << ',';
            if (id >= 0 && id < static_cast<int>(d.label_names.size()))
                out << d.label_names[static_cast<std::size_t>(id)];
            else
                out << "c" << id;
        }
        out << '\n';
    }
}

inline void save_dataset_raw(const Dataset& d, const std::string& path) {
    detail::validate_dataset(d);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write("RRDS", 4);
    std::uint32_t n = static_cast<std::uint32_t>(d.size());
    std::uint32_t dim = static_cast<std::uint32_t>(d.dim());
    std::uint8_t has_labels = d.has_labels() ? 1 : 0;
    out.write(reinterpret_cast<const char*>(&n), 4);
    out.write(reinterpret_cast<const char*>(&dim), 4);
    out.write(reinterpret_cast<const char*>(&has_labels), 1);
    for (std::uint32_t i = 0; i < n; ++i)
        for (std::uint32_t j = 0; j < dim; ++j) {
            float v = static_cast<float>(d.vectors(i, j));
            out.write(reinterpret_cast<const char*>(&v), 4);
        }
    if (has_labels)
        for (std::uint32_t i = 0; i < n; ++i) {
            std::uint32_t lab = static_cast<std::uint32_t>(d.labels[i]);
            out.write(reinterpret_cast<const char*>(&lab), 4);
        }
}

inline void save_dataset(const Dataset& d, const std::string& path, DatasetFormat format) {
    if (format == DatasetFormat::csv) save_dataset_csv(d, path);
    else save_dataset_raw(d, path);
}

// Isotropic Gaussian clusters with class-mean separation >= 6*cluster_std, so
// nearest-neighbor structure in the input space is correct by construction.
inline Dataset gen_synthetic(const SyntheticSpec& spec) {
    if (spec.num_classes < 2) throw std::invalid_argument("gen_synthetic: num_classes must be >= 2");
    if (spec.samples_per_class < 2) throw std::invalid_argument("gen_synthetic: samples_per_class must be >= 2");
    if (spec.dim < 1) throw std::invalid_argument("gen_synthetic: dim must be >= 1");
    if (!(spec.cluster_std > 0.0)) throw std::invalid_argument("gen_synthetic: cluster_std must be > 0");

    Rng rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double sep = 6.0 * spec.cluster_std;

    // class means by sequential rejection in a box that grows until feasible
    double half = sep * (1.0 + std::pow(static_cast<double>(spec.num_classes), 1.0 / spec.dim));
    std::vector<Eigen::VectorXd> means;
    means.reserve(static_cast<std::size_t>(spec.num_classes));
    for (int c = 0; c < spec.num_classes; ++c) {
        int attempts = 0;
        while (true) {
            Eigen::VectorXd m(spec.dim);
            for (int j = 0; j < spec.dim; ++j)
                m(j) = std::uniform_real_distribution<double>(-half, half)(rng);
            bool ok = true;
            for (const auto& prev : means)
                if ((m - prev).norm() < sep) { ok = false; break; }
            if (ok) { means.push_back(std::move(m)); break; }
            if (++attempts % 64 == 0) half *= 1.5;
        }
    }

    const int n = spec.num_classes * spec.samples_per_class;
    Dataset d;
    d.vectors.resize(n, spec.dim);
    d.labels.reserve(static_cast<std::size_t>(n));
    int row = 0;
    for (int c = 0; c < spec.num_classes; ++c) {
        for (int s = 0; s < spec.samples_per_class; ++s, ++row) {
            for (int j = 0; j < spec.dim; ++j)
                d.vectors(row, j) = detail::quantize_f32(means[static_cast<std::size_t>(c)](j) +
                                                         spec.cluster_std * gauss(rng));
            d.labels.push_back(c);
        }
    }
    d.label_names.reserve(static_cast<std::size_t>(spec.num_classes));
    for (int c = 0; c < spec.num_classes; ++c) d.label_names.push_back("c" + std::to_string(c));
    d.ids.resize(static_cast<std::size_t>(n));
    std::iota(d.ids.begin(), d.ids.end(), 0u);
    detail::validate_dataset(d);
    return d;
}

}  // namespace relrep
