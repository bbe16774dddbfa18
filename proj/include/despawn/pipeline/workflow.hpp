#pragma once

// Glue between files and the math: manifest windows, the synthetic dataset
// writer, reconstruction reports, and the in-memory benchmark runs.

#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "despawn/analysis.hpp"
#include "despawn/error.hpp"
#include "despawn/network.hpp"
#include "despawn/pipeline/manifest.hpp"
#include "despawn/pipeline/preprocess.hpp"
#include "despawn/pipeline/serialization.hpp"
#include "despawn/pipeline/synthetic.hpp"
#include "despawn/pipeline/wav.hpp"
#include "despawn/training.hpp"

namespace despawn::pipeline {

struct LabeledWindow {
    std::string id;  // "<manifest path>#<window index>"
    std::optional<std::string> label;
    Split split = Split::Train;
    std::vector<double> samples;
};

/// Reads, decimates and windows every entry (in manifest order), optionally
/// keeping one split only.
inline std::vector<LabeledWindow> load_windows(const DatasetManifest& manifest, std::optional<Split> only = {}) {
    validate_manifest(manifest);
    std::vector<LabeledWindow> out;
    for (const auto& entry : manifest.entries) {
        if (only && entry.split != *only) continue;
        const WavData wav = read_wav(manifest.resolve(entry));
        if (static_cast<double>(wav.sample_rate) != manifest.sample_rate) {
            throw Error(ErrorKind::InvalidInput, entry.path + " is sampled at " + std::to_string(wav.sample_rate) +
                                                     " Hz, manifest says " + format_double(manifest.sample_rate));
        }
        const auto windows = window_split(decimate(wav.samples, manifest.decimate), manifest.window_size);
        for (std::size_t k = 0; k < windows.size(); ++k) {
            out.push_back({entry.path + "#" + std::to_string(k), entry.label, entry.split, windows[k]});
        }
    }
    return out;
}

inline std::vector<std::vector<double>> samples_of(const std::vector<LabeledWindow>& windows) {
    std::vector<std::vector<double>> out;
    out.reserve(windows.size());
    for (const auto& w : windows) out.push_back(w.samples);
    return out;
}

/// Manifest path part of a window id.
inline std::string id_path(const std::string& id) {
    const auto hash = id.rfind('#');
    return hash == std::string::npos ? id : id.substr(0, hash);
}

inline std::vector<FeatureRow> feature_rows(const std::vector<LabeledWindow>& windows, const DespawnModel& model) {
    std::vector<FeatureRow> rows;
    rows.reserve(windows.size());
    for (const auto& w : windows) rows.push_back({w.id, extract_features(w.samples, model)});
    return rows;
}

/// AUC over the manifest's test entries; anything not labeled "normal" is
/// a positive. Score rows whose entry is missing or in the train split are ignored.
inline double auc_against_manifest(const std::vector<ScoreRow>& scores, const DatasetManifest& manifest) {
    std::map<std::string, const ManifestEntry*> by_path;
    for (const auto& e : manifest.entries) by_path.emplace(e.path, &e);
    std::vector<double> s;
    std::vector<int> labels;
    for (const auto& row : scores) {
        const auto it = by_path.find(id_path(row.id));
        if (it == by_path.end() || it->second->split != Split::Test) continue;
        if (!it->second->label) throw Error(ErrorKind::InvalidInput, "test entry " + it->first + " has no label");
        s.push_back(row.score);
        labels.push_back(*it->second->label == "normal" ? 0 : 1);
    }
    return roc_auc(s, labels);
}

inline nlohmann::json reconstruction_report(std::span<const double> signal, const DespawnModel& model) {
    const ForwardRecord rec = model_forward(signal, model);
    const LossTerms terms = loss(rec, signal, model.gamma);
    double max_abs = 0.0, sum_sq = 0.0;
    for (std::size_t i = 0; i < signal.size(); ++i) {
        const double r = signal[i] - rec.reconstruction[i];
        max_abs = std::max(max_abs, std::abs(r));
        sum_sq += r * r;
    }
    return {{"samples", signal.size()},
            {"levels", model.levels},
            {"mode", std::string(mode_name(model.mode))},
            {"max_abs_residual", max_abs},
            {"mean_abs_residual", terms.recon},
            {"rms_residual", std::sqrt(sum_sq / static_cast<double>(signal.size()))},
            {"sparsity", terms.sparsity},
            {"total_loss", terms.total}};
}

// ------------------------------------------------------- synthetic datasets

struct SynthCounts {
    std::size_t n_normal = 200;       // anomaly set: normal training windows
    std::size_t n_anomal = 50;        // anomaly set: test windows of each kind (normal, impulse, shift)
    std::size_t n_class_train = 30;   // classification set, per class
    std::size_t n_class_test = 20;
};

/// Writes one WAV per window plus anomaly.json and classification.json.
inline void write_synthetic_dataset(const std::filesystem::path& dir, const SyntheticSpec& spec,
                                    const SynthCounts& counts, std::uint64_t seed) {
    std::filesystem::create_directories(dir / "anomaly");
    std::filesystem::create_directories(dir / "classification");
    const auto rate = static_cast<std::uint32_t>(spec.sample_rate);
    const auto emit = [&](DatasetManifest& m, const std::string& sub, const std::vector<SyntheticWindow>& ws,
                          Split split, auto&& label_of) {
        std::map<std::string, std::size_t> next;
        for (const auto& w : ws) {
            const std::string label = label_of(w);
            char name[64];
            std::snprintf(name, sizeof name, "%s_%s_%04zu.wav", split_name(split), label.c_str(), next[label]++);
            const std::string rel = sub + "/" + name;
            write_wav(dir / rel, w.samples, rate);
            m.entries.push_back({rel, label, split});
        }
    };

    DatasetManifest anomaly{spec.sample_rate, spec.window, 1, {}, dir};
    const SyntheticSet a = anomaly_benchmark(spec, counts.n_normal, counts.n_anomal, seed);
    const auto kind_of = [](const SyntheticWindow& w) { return std::string(kind_label(w.kind)); };
    emit(anomaly, "anomaly", a.train, Split::Train, kind_of);
    emit(anomaly, "anomaly", a.test, Split::Test, kind_of);
    save_manifest(dir / "anomaly.json", anomaly);

    DatasetManifest classes{spec.sample_rate, spec.window, 1, {}, dir};
    const SyntheticSet c = classification_benchmark(spec, counts.n_class_train, counts.n_class_test, seed + 1);
    const auto class_of = [](const SyntheticWindow& w) { return class_label(w.kind); };
    emit(classes, "classification", c.train, Split::Train, class_of);
    emit(classes, "classification", c.test, Split::Test, class_of);
    save_manifest(dir / "classification.json", classes);
}

// -------------------------------------------------- in-memory benchmark runs

struct AnomalyRun {
    TrainReport training;
    std::vector<std::vector<double>> train_features;
    std::vector<std::vector<double>> test_features;
    std::vector<double> scores;
    std::vector<int> labels;  // 1 = impulse or shift
    std::vector<SignalKind> kinds;
    double auc = 0.0;
};

struct ElmConfig {
    std::size_t neurons = 50;
    double ridge_lambda = 1e-3;
    std::uint64_t seed = 0;
};

/// train -> features -> ELM -> AUC on a synthetic anomaly set.
inline AnomalyRun run_anomaly_benchmark(const SyntheticSet& set, SharingMode mode, const TrainConfig& config,
                                        const ElmConfig& elm_config) {
    std::vector<std::vector<double>> train_signals;
    for (const auto& w : set.train) train_signals.push_back(w.samples);
    AnomalyRun run;
    run.training = train(train_signals, mode, config);
    const DespawnModel& model = run.training.final_model;
    for (const auto& s : train_signals) run.train_features.push_back(extract_features(s, model).flatten());
    const OneClassElm elm = elm_fit(std::span<const std::vector<double>>(run.train_features), elm_config.neurons,
                                    elm_config.ridge_lambda, elm_config.seed);
    for (const auto& w : set.test) {
        run.test_features.push_back(extract_features(w.samples, model).flatten());
        run.scores.push_back(elm_score(elm, run.test_features.back()));
        run.labels.push_back(w.kind == SignalKind::Normal ? 0 : 1);
        run.kinds.push_back(w.kind);
    }
    run.auc = roc_auc(run.scores, run.labels);
    return run;
}

struct ClassificationRun {
    DictionaryModel dictionary;
    std::vector<Classification> predictions;
    std::vector<std::string> truth;
    double accuracy = 0.0;
};

inline ClassificationRun run_classification_benchmark(const SyntheticSet& set, SharingMode mode,
                                                      const TrainConfig& config) {
    std::map<std::string, std::vector<std::vector<double>>> by_class;
    for (const auto& w : set.train) by_class[class_label(w.kind)].push_back(w.samples);
    ClassificationRun run;
    run.dictionary = dict_train(by_class, mode, config);
    std::size_t correct = 0;
    for (const auto& w : set.test) {
        run.predictions.push_back(dict_classify(w.samples, run.dictionary));
        run.truth.push_back(class_label(w.kind));
        if (run.predictions.back().label == run.truth.back()) ++correct;
    }
    run.accuracy = static_cast<double>(correct) / static_cast<double>(set.test.size());
    return run;
}

}  // namespace despawn::pipeline
