#pragma once

// On-disk formats.
//
// A model set directory holds a JSON manifest plus one raw little-endian
// float64 file per model (row-major N x L) and, optionally, a raw
// little-endian int32 factor assignment file (row-major N x K).
//
//   { "n_samples": N, "n_latents": L,
//     "records": [ { "model_id", "hyper_index", "seed_index",
//                    "values_file", "kl": [L floats], "metadata"? } ],
//     "factor_grid"?: { "spec": [ {"name", "cardinality", "circular"} ],
//                       "assignments_file" },
//     "sample_ids"?: [N ints], "metadata"?: { ... } }
//
// Score tables are CSV: model_id,hyper_index,seed_index,metric,score,d.

#include <bit>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "udr/core.hpp"

namespace udr::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr const char* kManifestName = "manifest.json";

namespace detail {

template <typename T>
T byteswap_value(T v) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
    return v;
}

template <typename T>
void write_le(const fs::path& path, const std::vector<T>& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(data.data()),
                  static_cast<std::streamsize>(data.size() * sizeof(T)));
    } else {
        for (T v : data) {
            T s = byteswap_value(v);
            out.write(reinterpret_cast<const char*>(&s), sizeof(T));
        }
    }
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

template <typename T>
std::vector<T> read_le(const fs::path& path, std::size_t count) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    in.seekg(0, std::ios::end);
    const auto bytes = static_cast<std::size_t>(in.tellg());
    if (bytes != count * sizeof(T)) {
        throw ValidationError("dimension mismatch: '" + path.filename().string() + "' holds " +
                              std::to_string(bytes) + " bytes, expected " +
                              std::to_string(count * sizeof(T)));
    }
    in.seekg(0);
    std::vector<T> data(count);
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(bytes));
    if (!in) throw IoError("read failed for '" + path.string() + "'");
    if constexpr (std::endian::native != std::endian::little) {
        for (auto& v : data) v = byteswap_value(v);
    }
    return data;
}

inline json metadata_to_json(const Metadata& m) {
    json j = json::object();
    for (const auto& [k, v] : m) j[k] = v;
    return j;
}

inline Metadata metadata_from_json(const json& j) {
    Metadata m;
    if (!j.is_object()) throw ValidationError("malformed manifest: metadata must be an object");
    for (const auto& [k, v] : j.items()) {
        if (!v.is_string()) throw ValidationError("malformed manifest: metadata values must be strings");
        m[k] = v.get<std::string>();
    }
    return m;
}

template <typename T>
T require(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) throw ValidationError("malformed manifest: missing '" + std::string(key) + "' in " + where);
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ValidationError("malformed manifest: bad type for '" + std::string(key) + "' in " + where);
    }
}

}  // namespace detail

inline json factor_spec_to_json(const FactorSpec& spec) {
    json arr = json::array();
    for (const auto& f : spec.factors())
        arr.push_back({{"name", f.name}, {"cardinality", f.cardinality}, {"circular", f.circular}});
    return arr;
}

inline FactorSpec factor_spec_from_json(const json& arr) {
    if (!arr.is_array()) throw ValidationError("malformed manifest: factor spec must be an array");
    std::vector<Factor> factors;
    for (const auto& f : arr) {
        factors.push_back({detail::require<std::string>(f, "name", "factor spec"),
                           detail::require<int>(f, "cardinality", "factor spec"),
                           f.value("circular", false)});
    }
    return FactorSpec(std::move(factors));
}

/// Writes the set into `dir` and returns the manifest path.
inline fs::path save_model_set(const ModelSet& set, const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());

    json manifest;
    manifest["n_samples"] = set.num_samples();
    manifest["n_latents"] = set.num_latents();
    manifest["records"] = json::array();
    for (std::size_t i = 0; i < set.size(); ++i) {
        const auto& rec = set[i];
        char name[32];
        std::snprintf(name, sizeof(name), "model_%05zu.f64", i);
        detail::write_le(dir / name, rec.response.values().data());
        json r = {{"model_id", rec.model_id},
                  {"hyper_index", rec.hyper_index},
                  {"seed_index", rec.seed_index},
                  {"values_file", name},
                  {"kl", rec.response.kl()}};
        if (!rec.metadata.empty()) r["metadata"] = detail::metadata_to_json(rec.metadata);
        manifest["records"].push_back(std::move(r));
    }
    if (!set.empty()) {
        const auto& ids = set[0].response.sample_ids();
        bool default_ids = true;
        for (std::size_t i = 0; i < ids.size(); ++i)
            if (ids[i] != static_cast<std::int64_t>(i)) default_ids = false;
        if (!default_ids) manifest["sample_ids"] = ids;
    }
    if (const auto& grid = set.factor_grid()) {
        detail::write_le(dir / "factors.i32", grid->assignments().data());
        manifest["factor_grid"] = {{"spec", factor_spec_to_json(grid->spec())},
                                   {"assignments_file", "factors.i32"}};
    }
    if (!set.metadata().empty()) manifest["metadata"] = detail::metadata_to_json(set.metadata());

    const auto path = dir / kManifestName;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write manifest '" + path.string() + "'");
    out << manifest.dump(2) << '\n';
    if (!out) throw IoError("write failed for '" + path.string() + "'");
    return path;
}

/// Loads and validates a model set. Accepts a manifest path or its directory.
inline ModelSet load_model_set(const fs::path& manifest_path) {
    fs::path path = fs::is_directory(manifest_path) ? manifest_path / kManifestName : manifest_path;
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
    json manifest;
    try {
        manifest = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("malformed manifest: ") + e.what());
    }
    if (!manifest.is_object()) throw ValidationError("malformed manifest: top level must be an object");
    const fs::path dir = path.parent_path();

    const auto n = detail::require<std::size_t>(manifest, "n_samples", "manifest");
    const auto l = detail::require<std::size_t>(manifest, "n_latents", "manifest");
    if (!manifest.contains("records") || !manifest["records"].is_array())
        throw ValidationError("malformed manifest: 'records' must be an array");

    std::vector<std::int64_t> sample_ids;
    if (manifest.contains("sample_ids")) {
        sample_ids = manifest["sample_ids"].get<std::vector<std::int64_t>>();
        if (sample_ids.size() != n) throw ValidationError("dimension mismatch: sample_ids length != n_samples");
    }

    std::vector<ModelRecord> records;
    for (const auto& r : manifest["records"]) {
        const auto id = detail::require<std::string>(r, "model_id", "record");
        const std::string where = "record '" + id + "'";
        if (!r.contains("kl")) throw ValidationError("missing KL vector for " + where);
        auto kl = detail::require<std::vector<double>>(r, "kl", where);
        if (kl.size() != l) {
            throw ValidationError("dimension mismatch: " + where + " has kl length " +
                                  std::to_string(kl.size()) + " but n_latents = " + std::to_string(l));
        }
        auto values = detail::read_le<double>(dir / detail::require<std::string>(r, "values_file", where), n * l);
        ModelRecord rec;
        rec.model_id = id;
        rec.hyper_index = detail::require<int>(r, "hyper_index", where);
        rec.seed_index = detail::require<int>(r, "seed_index", where);
        rec.response = LatentResponse(MatrixD(n, l, std::move(values)), std::move(kl), sample_ids);
        if (r.contains("metadata")) rec.metadata = detail::metadata_from_json(r["metadata"]);
        records.push_back(std::move(rec));
    }

    std::optional<FactorGrid> grid;
    if (manifest.contains("factor_grid")) {
        const auto& g = manifest["factor_grid"];
        if (!g.contains("spec")) throw ValidationError("malformed manifest: factor_grid without spec");
        auto spec = factor_spec_from_json(g["spec"]);
        auto data = detail::read_le<std::int32_t>(
            dir / detail::require<std::string>(g, "assignments_file", "factor_grid"), n * spec.size());
        const auto k = spec.size();
        grid = FactorGrid(std::move(spec), MatrixI(n, k, std::move(data)));
    }
    Metadata meta;
    if (manifest.contains("metadata")) meta = detail::metadata_from_json(manifest["metadata"]);
    return ModelSet(std::move(records), std::move(grid), std::move(meta));
}

/// Reads an N x L matrix of numbers from CSV; a non-numeric first line is
/// taken as a header.
inline MatrixD read_csv_matrix(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::vector<double> data;
    std::size_t cols = 0, rows = 0;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        bool numeric = true;
        while (std::getline(ss, cell, ',')) {
            try {
                std::size_t used = 0;
                row.push_back(std::stod(cell, &used));
                while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
                if (used != cell.size()) numeric = false;
            } catch (const std::exception&) {
                numeric = false;
            }
        }
        if (!numeric) {
            if (first) {
                first = false;
                continue;
            }
            throw ValidationError("non-numeric cell in '" + path.string() + "' row " + std::to_string(rows + 1));
        }
        first = false;
        if (cols == 0) cols = row.size();
        if (row.size() != cols) throw ValidationError("ragged CSV rows in '" + path.string() + "'");
        data.insert(data.end(), row.begin(), row.end());
        ++rows;
    }
    return MatrixD(rows, cols, std::move(data));
}

inline LatentResponse import_csv_response(const fs::path& values_csv, std::vector<double> kl) {
    return LatentResponse(read_csv_matrix(values_csv), std::move(kl));
}

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void write_score_table(const ScoreTable& table, const fs::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << "model_id,hyper_index,seed_index,metric,score,d\n";
    for (const auto& r : table.rows()) {
        out << r.model_id << ',' << r.hyper_index << ',' << r.seed_index << ',' << r.metric << ','
            << format_double(r.score) << ',' << r.d << '\n';
    }
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline ScoreTable read_score_table(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line) || line.rfind("model_id,", 0) != 0)
        throw ValidationError("'" + path.string() + "' is not a score table");
    ScoreTable table;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 6)
            throw ValidationError("score table line " + std::to_string(lineno) + " has " +
                                  std::to_string(cells.size()) + " fields");
        try {
            table.add({cells[0], std::stoi(cells[1]), std::stoi(cells[2]), cells[3], std::stod(cells[4]),
                       std::stoi(cells[5])});
        } catch (const std::invalid_argument&) {
            throw ValidationError("score table line " + std::to_string(lineno) + " is malformed");
        }
    }
    return table;
}

}  // namespace udr::io
