// despawn: command-line front end for synthesis, training, feature
// extraction, anomaly scoring and dictionary classification.

#include <cstdint>
#include <exception>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "despawn/analysis.hpp"
#include "despawn/network.hpp"
#include "despawn/pipeline/manifest.hpp"
#include "despawn/pipeline/serialization.hpp"
#include "despawn/pipeline/workflow.hpp"
#include "despawn/training.hpp"

namespace {

using namespace despawn;
using namespace despawn::pipeline;

std::string mode_choices() {
    std::string s;
    for (SharingMode m : kAllModes) s += (s.empty() ? "" : "|") + std::string(mode_name(m));
    return s;
}

std::size_t parse_levels(const std::string& text) {
    if (text == "auto") return 0;
    std::size_t pos = 0;
    unsigned long v = 0;
    try {
        v = std::stoul(text, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos != text.size() || v == 0) throw Error(ErrorKind::Configuration, "--levels must be 'auto' or a positive integer");
    return v;
}

struct TrainOptions {
    std::string mode = "despawn";
    double gamma = 1.0;
    std::string levels = "auto";
    std::size_t kernel_size = 8;
    std::size_t epochs = 100;
    double lr = 1e-3;
    std::size_t batch = 8;
    std::uint64_t seed = 0;
    std::size_t workers = 1;

    void attach(CLI::App* app) {
        app->add_option("--mode", mode, "sharing mode: " + mode_choices())->capture_default_str();
        app->add_option("--gamma", gamma, "sparsity weight")->capture_default_str();
        app->add_option("--levels", levels, "decomposition levels, or auto")->capture_default_str();
        app->add_option("--kernel-size", kernel_size, "taps per kernel")->capture_default_str();
        app->add_option("--epochs", epochs)->capture_default_str();
        app->add_option("--lr", lr, "Adam learning rate")->capture_default_str();
        app->add_option("--batch", batch, "mini-batch size")->capture_default_str();
        app->add_option("--seed", seed, "shuffle seed")->capture_default_str();
        app->add_option("--workers", workers, "threads per batch")->capture_default_str();
    }

    TrainConfig config() const {
        TrainConfig c;
        c.epochs = epochs;
        c.learning_rate = lr;
        c.batch_size = batch;
        c.seed = seed;
        c.gamma = gamma;
        c.levels = parse_levels(levels);
        c.kernel_size = kernel_size;
        c.workers = workers;
        return c;
    }
};

nlohmann::json history_json(const TrainReport& report) {
    nlohmann::json h = nlohmann::json::array();
    for (const auto& t : report.loss_history) h.push_back({{"total", t.total}, {"recon", t.recon}, {"sparsity", t.sparsity}});
    return h;
}

void require_windows(const std::vector<LabeledWindow>& windows, const std::string& what) {
    if (windows.empty()) throw Error(ErrorKind::InvalidInput, "no " + what + " windows in the manifest");
}

int run(int argc, char** argv) {
    CLI::App app{"Learnable wavelet cascades for sparse signal decomposition"};
    app.require_subcommand(1);

    // synth
    std::string synth_out;
    std::uint64_t synth_seed = 0;
    SyntheticSpec synth_spec;
    SynthCounts synth_counts;
    auto* synth = app.add_subcommand("synth", "write a synthetic WAV dataset with anomaly and classification manifests");
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--seed", synth_seed)->capture_default_str();
    synth->add_option("--sigma", synth_spec.sigma, "noise standard deviation")->capture_default_str();
    synth->add_option("--n-normal", synth_counts.n_normal, "normal training windows")->capture_default_str();
    synth->add_option("--n-anomal", synth_counts.n_anomal, "test windows per kind (normal, impulse, shift)")
        ->capture_default_str();
    synth->add_option("--n-class-train", synth_counts.n_class_train, "classification training windows per class")
        ->capture_default_str();
    synth->add_option("--n-class-test", synth_counts.n_class_test, "classification test windows per class")
        ->capture_default_str();
    synth->add_option("--window", synth_spec.window, "samples per window")->capture_default_str();

    // train
    std::string train_manifest, train_out;
    TrainOptions train_opts;
    auto* train_cmd = app.add_subcommand("train", "train a cascade on the manifest's train split");
    train_cmd->add_option("--manifest", train_manifest)->required();
    train_cmd->add_option("--out", train_out, "model JSON")->required();
    train_opts.attach(train_cmd);

    // reconstruct
    std::string rec_model, rec_input, rec_out;
    auto* reconstruct = app.add_subcommand("reconstruct", "run a model over one WAV file and report the residual");
    reconstruct->add_option("--model", rec_model)->required();
    reconstruct->add_option("--input", rec_input)->required();
    reconstruct->add_option("--out", rec_out, "reconstructed WAV")->required();

    // features
    std::string feat_model, feat_manifest, feat_out;
    auto* features = app.add_subcommand("features", "latent features of every manifest window");
    features->add_option("--model", feat_model)->required();
    features->add_option("--manifest", feat_manifest)->required();
    features->add_option("--out", feat_out, "features CSV")->required();

    // detect-train
    std::string dt_features, dt_manifest, dt_out;
    ElmConfig dt_elm;
    auto* detect_train = app.add_subcommand("detect-train", "fit a one-class ELM on feature rows");
    detect_train->add_option("--features", dt_features)->required();
    detect_train->add_option("--neurons", dt_elm.neurons)->capture_default_str();
    detect_train->add_option("--ridge", dt_elm.ridge_lambda)->capture_default_str();
    detect_train->add_option("--seed", dt_elm.seed)->capture_default_str();
    detect_train->add_option("--manifest", dt_manifest, "fit only rows from this manifest's train split");
    detect_train->add_option("--out", dt_out, "ELM JSON")->required();

    // detect-score
    std::string ds_elm, ds_features, ds_out;
    auto* detect_score = app.add_subcommand("detect-score", "anomaly score of every feature row");
    detect_score->add_option("--elm", ds_elm)->required();
    detect_score->add_option("--features", ds_features)->required();
    detect_score->add_option("--out", ds_out, "scores CSV")->required();

    // eval-auc
    std::string auc_scores, auc_manifest;
    auto* eval_auc = app.add_subcommand("eval-auc", "ROC-AUC of scores on the manifest's test split");
    eval_auc->add_option("--scores", auc_scores)->required();
    eval_auc->add_option("--manifest", auc_manifest)->required();

    // grad-check
    std::string gc_mode = "all";
    std::uint64_t gc_seed = 0;
    std::size_t gc_seeds = 5, gc_length = 256, gc_levels = 8, gc_kernel = 8;
    double gc_tol = 1e-4, gc_abs = 1e-7;
    auto* grad_check = app.add_subcommand("grad-check", "compare backward against central finite differences");
    grad_check->add_option("--mode", gc_mode, "mode, or all")->capture_default_str();
    grad_check->add_option("--seed", gc_seed, "first seed")->capture_default_str();
    grad_check->add_option("--num-seeds", gc_seeds)->capture_default_str();
    grad_check->add_option("--tolerance", gc_tol, "relative tolerance")->capture_default_str();
    grad_check->add_option("--abs-tolerance", gc_abs)->capture_default_str();
    grad_check->add_option("--length", gc_length, "signal length")->capture_default_str();
    grad_check->add_option("--levels", gc_levels)->capture_default_str();
    grad_check->add_option("--kernel-size", gc_kernel)->capture_default_str();

    // classify-train / classify
    std::string ct_manifest, ct_out;
    TrainOptions ct_opts;
    auto* classify_train = app.add_subcommand("classify-train", "train one cascade per label (train split)");
    classify_train->add_option("--manifest", ct_manifest)->required();
    classify_train->add_option("--out", ct_out, "dictionary JSON")->required();
    ct_opts.attach(classify_train);

    std::string cl_dict, cl_manifest, cl_out;
    auto* classify = app.add_subcommand("classify", "label test-split windows by the lowest-loss cascade");
    classify->add_option("--dict", cl_dict)->required();
    classify->add_option("--manifest", cl_manifest)->required();
    classify->add_option("--out", cl_out, "predictions CSV")->required();

    CLI11_PARSE(app, argc, argv);

    if (*synth) {
        write_synthetic_dataset(synth_out, synth_spec, synth_counts, synth_seed);
        std::cout << "wrote " << synth_out << "/anomaly.json and " << synth_out << "/classification.json\n";
    } else if (*train_cmd) {
        const auto windows = load_windows(load_manifest(train_manifest), Split::Train);
        require_windows(windows, "train");
        const auto report = train(samples_of(windows), parse_mode(train_opts.mode), train_opts.config());
        save_model(train_out, report.final_model);
        std::cout << nlohmann::json{{"windows", windows.size()},
                                    {"parameters", parameter_count(report.final_model)},
                                    {"wall_time_seconds", report.wall_time_seconds},
                                    {"loss_history", history_json(report)}}
                         .dump(2)
                  << '\n';
    } else if (*reconstruct) {
        const DespawnModel model = load_model(rec_model);
        const WavData wav = read_wav(rec_input);
        const ForwardRecord rec = model_forward(wav.samples, model);
        write_wav(rec_out, rec.reconstruction, wav.sample_rate);
        std::cout << reconstruction_report(wav.samples, model).dump(2) << '\n';
    } else if (*features) {
        const DespawnModel model = load_model(feat_model);
        const auto windows = load_windows(load_manifest(feat_manifest));
        require_windows(windows, "");
        const auto rows = feature_rows(windows, model);
        write_text_file(feat_out, [&](std::ostream& out) { write_features_csv(out, rows); });
    } else if (*detect_train) {
        auto in = open_text_file(dt_features);
        auto rows = read_features_csv(in);
        if (!dt_manifest.empty()) {
            std::set<std::string> train_paths;
            for (const auto& e : load_manifest(dt_manifest).entries) {
                if (e.split == Split::Train) train_paths.insert(e.path);
            }
            std::erase_if(rows, [&](const FeatureRow& r) { return !train_paths.contains(id_path(r.id)); });
        }
        std::vector<LatentFeatures> feats;
        for (const auto& r : rows) feats.push_back(r.features);
        const OneClassElm elm = elm_fit(std::span<const LatentFeatures>(feats), dt_elm.neurons, dt_elm.ridge_lambda, dt_elm.seed);
        write_json_file(dt_out, elm_to_json(elm));
        std::cout << "fitted on " << feats.size() << " rows\n";
    } else if (*detect_score) {
        const OneClassElm elm = elm_from_json(read_json_file(ds_elm));
        auto in = open_text_file(ds_features);
        std::vector<ScoreRow> scores;
        for (const auto& r : read_features_csv(in)) scores.push_back({r.id, elm_score(elm, r.features)});
        write_text_file(ds_out, [&](std::ostream& out) { write_scores_csv(out, scores); });
    } else if (*eval_auc) {
        auto in = open_text_file(auc_scores);
        std::cout << format_double(auc_against_manifest(read_scores_csv(in), load_manifest(auc_manifest))) << '\n';
    } else if (*grad_check) {
        std::vector<SharingMode> modes;
        if (gc_mode == "all") {
            for (SharingMode m : kAllModes)
                if (m != SharingMode::Db4Fixed) modes.push_back(m);
        } else {
            modes.push_back(parse_mode(gc_mode));
        }
        bool ok = true;
        for (SharingMode mode : modes) {
            if (uses_fixed_db4(mode) && gc_kernel != 8) continue;
            double worst = 0.0, worst_abs = 0.0;
            std::size_t failures = 0, checked = 0;
            for (std::uint64_t s = gc_seed; s < gc_seed + gc_seeds; ++s) {
                const DespawnModel model = perturbed_model(gc_levels, gc_kernel, mode, 1.0, s);
                const auto signal = gaussian_signal(gc_length, s + 1000);
                const GradCheckResult r = compare_with_finite_differences(signal, model, 1.0, gc_tol, gc_abs);
                worst = std::max(worst, r.max_rel_error);
                worst_abs = std::max(worst_abs, r.max_abs_error);
                failures += r.failures;
                checked += r.parameters_checked;
                for (const auto& f : r.failure_labels) std::cerr << "  seed " << s << " " << f << '\n';
            }
            const bool pass = failures == 0;
            ok = ok && pass;
            std::cout << (pass ? "PASS " : "FAIL ") << mode_name(mode) << ": " << checked << " parameters checked, "
                      << failures << " outside tolerance, max abs error " << worst_abs
                      << ", max relative error above the abs floor " << worst << '\n';
        }
        return ok ? 0 : 1;
    } else if (*classify_train) {
        std::map<std::string, std::vector<std::vector<double>>> by_class;
        for (auto& w : load_windows(load_manifest(ct_manifest), Split::Train)) {
            if (!w.label) throw Error(ErrorKind::InvalidInput, "unlabeled training window " + w.id);
            by_class[*w.label].push_back(std::move(w.samples));
        }
        const DictionaryModel dict = dict_train(by_class, parse_mode(ct_opts.mode), ct_opts.config());
        write_json_file(ct_out, dictionary_to_json(dict));
        std::cout << "trained " << dict.class_models.size() << " class models\n";
    } else if (*classify) {
        const DictionaryModel dict = dictionary_from_json(read_json_file(cl_dict));
        const auto windows = load_windows(load_manifest(cl_manifest), Split::Test);
        require_windows(windows, "test");
        std::vector<PredictionRow> rows;
        std::size_t labeled = 0, correct = 0;
        for (const auto& w : windows) {
            rows.push_back({w.id, w.label.value_or(""), dict_classify(w.samples, dict)});
            if (w.label) {
                ++labeled;
                if (*w.label == rows.back().result.label) ++correct;
            }
        }
        write_text_file(cl_out, [&](std::ostream& out) { write_predictions_csv(out, rows); });
        if (labeled > 0) {
            std::cout << "accuracy " << format_double(static_cast<double>(correct) / static_cast<double>(labeled))
                      << " (" << correct << "/" << labeled << ")\n";
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const std::exception& e) {
        std::cerr << "despawn: " << e.what() << '\n';
        return 2;
    }
}
