#pragma once

// JSON persistence for models, ELMs and dictionaries; CSV for features,
// scores and predictions. Doubles are written so they read back bit-exactly.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "despawn/analysis.hpp"
#include "despawn/error.hpp"
#include "despawn/network.hpp"
#include "despawn/pipeline/manifest.hpp"

namespace despawn::pipeline {

inline constexpr int kModelFormatVersion = 1;

// ---------------------------------------------------------------- model JSON

namespace detail {

inline constexpr std::array<const char*, 4> kKernelNames = {"h", "g", "h_bar", "g_bar"};

inline nlohmann::json kernels_to_json(const LearnableKernels& k, SharingMode mode) {
    nlohmann::json j = nlohmann::json::object();
    const std::array slots{&k.h, &k.g, &k.h_bar, &k.g_bar};
    for (std::size_t i = 0; i < trained_kernels_per_group(mode); ++i) j[kKernelNames[i]] = *slots[i];
    return j;
}

inline void kernels_from_json(const nlohmann::json& j, SharingMode mode, std::size_t kernel_size,
                              LearnableKernels& k) {
    const std::array slots{&k.h, &k.g, &k.h_bar, &k.g_bar};
    for (std::size_t i = 0; i < trained_kernels_per_group(mode); ++i) {
        auto taps = j.at(kKernelNames[i]).get<std::vector<double>>();
        if (taps.size() != kernel_size) {
            throw Error(ErrorKind::InvalidInput, std::string("kernel '") + kKernelNames[i] + "' has " +
                                                     std::to_string(taps.size()) + " taps, expected " +
                                                     std::to_string(kernel_size));
        }
        *slots[i] = std::move(taps);
    }
}

}  // namespace detail

inline nlohmann::json model_to_json(const DespawnModel& m) {
    nlohmann::json j{{"format_version", kModelFormatVersion},
                     {"mode", std::string(mode_name(m.mode))},
                     {"levels", m.levels},
                     {"kernel_size", m.kernel_size},
                     {"alpha", m.alpha()},
                     {"gamma", m.gamma}};
    const bool per_level_kernels = !shares_kernels(m.mode);
    if (shares_kernels(m.mode) && trained_kernels_per_group(m.mode) > 0) {
        j["shared"] = detail::kernels_to_json(m.kernels.front(), m.mode);
    }
    nlohmann::json levels = nlohmann::json::array();
    for (std::size_t l = 0; l < m.levels; ++l) {
        nlohmann::json rec = per_level_kernels ? detail::kernels_to_json(m.kernels[l], m.mode) : nlohmann::json::object();
        rec["b_plus"] = m.thresholds[l].b_plus;
        rec["b_minus"] = m.thresholds[l].b_minus;
        levels.push_back(std::move(rec));
    }
    j["per_level"] = std::move(levels);
    return j;
}

inline DespawnModel model_from_json(const nlohmann::json& j) {
    try {
        const int version = j.at("format_version").get<int>();
        if (version != kModelFormatVersion) {
            throw Error(ErrorKind::InvalidInput, "unsupported model format_version " + std::to_string(version));
        }
        const SharingMode mode = parse_mode(j.at("mode").get<std::string>());
        const auto levels = j.at("levels").get<std::size_t>();
        const auto kernel_size = j.at("kernel_size").get<std::size_t>();
        DespawnModel m = build_model(levels, kernel_size, mode, j.at("gamma").get<double>(), j.at("alpha").get<double>());
        const auto& records = j.at("per_level");
        if (records.size() != levels) {
            throw Error(ErrorKind::InvalidInput, "model has " + std::to_string(records.size()) +
                                                     " level records, expected " + std::to_string(levels));
        }
        if (shares_kernels(mode)) {
            if (trained_kernels_per_group(mode) > 0) {
                detail::kernels_from_json(j.at("shared"), mode, kernel_size, m.kernels.front());
            }
        } else {
            for (std::size_t l = 0; l < levels; ++l) detail::kernels_from_json(records[l], mode, kernel_size, m.kernels[l]);
        }
        for (std::size_t l = 0; l < levels; ++l) {
            m.thresholds[l].b_plus = records[l].at("b_plus").get<double>();
            m.thresholds[l].b_minus = records[l].at("b_minus").get<double>();
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::InvalidInput, std::string("malformed model: ") + e.what());
    }
}

inline void save_model(const std::filesystem::path& path, const DespawnModel& m) {
    write_json_file(path, model_to_json(m));
}

inline DespawnModel load_model(const std::filesystem::path& path) { return model_from_json(read_json_file(path)); }

// ------------------------------------------------------------------ ELM JSON

inline nlohmann::json elm_to_json(const OneClassElm& elm) {
    const auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    nlohmann::json weights = nlohmann::json::array();
    for (Eigen::Index i = 0; i < elm.hidden_weights.rows(); ++i) {
        std::vector<double> row(static_cast<std::size_t>(elm.hidden_weights.cols()));
        for (Eigen::Index k = 0; k < elm.hidden_weights.cols(); ++k) row[static_cast<std::size_t>(k)] = elm.hidden_weights(i, k);
        weights.push_back(std::move(row));
    }
    return {{"format_version", kModelFormatVersion},
            {"neurons", elm.neurons()},
            {"dimension", elm.dimension()},
            {"ridge_lambda", elm.ridge_lambda},
            {"seed", elm.seed},
            {"feature_mean", vec(elm.feature_mean)},
            {"feature_stddev", vec(elm.feature_stddev)},
            {"hidden_weights", std::move(weights)},
            {"hidden_bias", vec(elm.hidden_bias)},
            {"output_weights", vec(elm.output_weights)}};
}

inline OneClassElm elm_from_json(const nlohmann::json& j) {
    try {
        const auto vec = [&](const char* key, std::size_t expect) {
            const auto v = j.at(key).get<std::vector<double>>();
            if (v.size() != expect) throw Error(ErrorKind::InvalidInput, std::string("ELM field '") + key + "' has wrong length");
            return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
        };
        const auto h = j.at("neurons").get<std::size_t>();
        const auto d = j.at("dimension").get<std::size_t>();
        OneClassElm elm;
        elm.ridge_lambda = j.at("ridge_lambda").get<double>();
        elm.seed = j.at("seed").get<std::uint64_t>();
        elm.feature_mean = vec("feature_mean", d);
        elm.feature_stddev = vec("feature_stddev", d);
        elm.hidden_bias = vec("hidden_bias", h);
        elm.output_weights = vec("output_weights", h);
        const auto& rows = j.at("hidden_weights");
        if (rows.size() != d) throw Error(ErrorKind::InvalidInput, "ELM hidden_weights has wrong row count");
        elm.hidden_weights.resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(h));
        for (std::size_t i = 0; i < d; ++i) {
            const auto row = rows[i].get<std::vector<double>>();
            if (row.size() != h) throw Error(ErrorKind::InvalidInput, "ELM hidden_weights has wrong column count");
            for (std::size_t k = 0; k < h; ++k) {
                elm.hidden_weights(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = row[k];
            }
        }
        return elm;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::InvalidInput, std::string("malformed ELM: ") + e.what());
    }
}

// ----------------------------------------------------------- dictionary JSON

inline nlohmann::json dictionary_to_json(const DictionaryModel& dict) {
    nlohmann::json classes = nlohmann::json::object();
    for (const auto& [label, model] : dict.class_models) classes[label] = model_to_json(model);
    return {{"format_version", kModelFormatVersion}, {"gamma", dict.gamma}, {"classes", std::move(classes)}};
}

inline DictionaryModel dictionary_from_json(const nlohmann::json& j) {
    try {
        DictionaryModel dict;
        dict.gamma = j.at("gamma").get<double>();
        for (const auto& [label, model] : j.at("classes").items()) dict.class_models.emplace(label, model_from_json(model));
        validate_dictionary(dict);
        return dict;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::InvalidInput, std::string("malformed dictionary: ") + e.what());
    }
}

// ----------------------------------------------------------------------- CSV

/// Shortest text that parses back to the same double (at most 17 digits).
inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
    double v = 0.0;
    const char* end = s.data() + s.size();
    const auto res = std::from_chars(s.data(), end, v);
    if (res.ec != std::errc() || res.ptr != end) throw Error(ErrorKind::InvalidInput, "not a number: '" + s + "'");
    return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline void check_id(const std::string& id) {
    if (id.empty() || id.find_first_of(",\n\r\"") != std::string::npos) {
        throw Error(ErrorKind::InvalidInput, "id '" + id + "' is empty or contains a comma, quote or newline");
    }
}

struct FeatureRow {
    std::string id;
    LatentFeatures features;
};

inline std::string features_header(std::size_t levels) {
    std::string h = "id,res_mean,res_max";
    for (std::size_t l = 1; l <= levels; ++l) h += ",l1_mean_" + std::to_string(l);
    for (std::size_t l = 1; l <= levels; ++l) h += ",l1_max_" + std::to_string(l);
    return h;
}

inline void write_features_csv(std::ostream& out, const std::vector<FeatureRow>& rows) {
    if (rows.empty()) throw Error(ErrorKind::InvalidInput, "no feature rows to write");
    const std::size_t levels = rows.front().features.l1_mean.size();
    out << features_header(levels) << '\n';
    for (const auto& r : rows) {
        check_id(r.id);
        if (r.features.l1_mean.size() != levels || r.features.l1_max.size() != levels) {
            throw Error(ErrorKind::InvalidInput, "feature rows differ in level count");
        }
        out << r.id;
        for (double v : r.features.flatten()) out << ',' << format_double(v);
        out << '\n';
    }
}

inline std::vector<FeatureRow> read_features_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorKind::InvalidInput, "empty features CSV");
    const auto header = split_csv_line(line);
    if (header.size() < 5 || (header.size() - 3) % 2 != 0) {
        throw Error(ErrorKind::InvalidInput, "features CSV header has " + std::to_string(header.size()) + " columns");
    }
    const std::size_t levels = (header.size() - 3) / 2;
    if (line != features_header(levels)) throw Error(ErrorKind::InvalidInput, "unexpected features CSV header");
    std::vector<FeatureRow> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size()) {
            throw Error(ErrorKind::InvalidInput, "features CSV line " + std::to_string(line_no) + " has " +
                                                     std::to_string(cells.size()) + " columns");
        }
        std::vector<double> values;
        for (std::size_t c = 1; c < cells.size(); ++c) values.push_back(parse_double(cells[c]));
        rows.push_back({cells[0], LatentFeatures::unflatten(values)});
    }
    return rows;
}

struct ScoreRow {
    std::string id;
    double score = 0.0;
};

inline void write_scores_csv(std::ostream& out, const std::vector<ScoreRow>& rows) {
    out << "id,score\n";
    for (const auto& r : rows) {
        check_id(r.id);
        out << r.id << ',' << format_double(r.score) << '\n';
    }
}

inline std::vector<ScoreRow> read_scores_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "id,score") throw Error(ErrorKind::InvalidInput, "scores CSV must start with 'id,score'");
    std::vector<ScoreRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != 2) throw Error(ErrorKind::InvalidInput, "malformed scores line '" + line + "'");
        rows.push_back({cells[0], parse_double(cells[1])});
    }
    return rows;
}

struct PredictionRow {
    std::string id;
    std::string label;  // empty when the manifest entry is unlabeled
    Classification result;
};

inline void write_predictions_csv(std::ostream& out, const std::vector<PredictionRow>& rows) {
    if (rows.empty()) throw Error(ErrorKind::InvalidInput, "no predictions to write");
    out << "id,label,predicted";
    for (const auto& [cls, loss] : rows.front().result.losses) out << ",loss_" << cls;
    out << '\n';
    for (const auto& r : rows) {
        check_id(r.id);
        out << r.id << ',' << r.label << ',' << r.result.label;
        for (const auto& [cls, loss] : r.result.losses) out << ',' << format_double(loss);
        out << '\n';
    }
}

template <typename Fn>
void write_text_file(const std::filesystem::path& path, Fn&& fn) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    fn(out);
    if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

inline std::ifstream open_text_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    return in;
}

}  // namespace despawn::pipeline
