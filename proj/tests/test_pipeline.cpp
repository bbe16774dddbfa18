#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <sstream>
#include <vector>

#include <unistd.h>

#include "despawn/pipeline/workflow.hpp"

using namespace despawn;
using namespace despawn::pipeline;
using Catch::Approx;

namespace {

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() / ("despawn_test_" + tag + "_" + std::to_string(::getpid()));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

std::vector<std::uint8_t> wav_bytes(std::uint16_t format, std::uint16_t channels, std::uint16_t bits,
                                    const std::vector<std::int16_t>& frames_interleaved, bool extensible = false) {
    std::vector<std::uint8_t> b;
    const auto put16 = [&](std::uint16_t v) { pipeline::detail::put_u16(b, v); };
    const auto put32 = [&](std::uint32_t v) { pipeline::detail::put_u32(b, v); };
    const auto data_bytes = static_cast<std::uint32_t>(frames_interleaved.size() * 2);
    const std::uint32_t fmt_size = extensible ? 40 : 16;
    pipeline::detail::put_tag(b, "RIFF");
    put32(4 + 8 + fmt_size + 8 + data_bytes);
    pipeline::detail::put_tag(b, "WAVE");
    pipeline::detail::put_tag(b, "fmt ");
    put32(fmt_size);
    put16(extensible ? 0xFFFE : format);
    put16(channels);
    put32(8000);
    put32(8000u * channels * 2);
    put16(static_cast<std::uint16_t>(channels * bits / 8));
    put16(bits);
    if (extensible) {
        put16(22);
        put16(bits);
        put32(0);
        put16(format);
        for (int i = 0; i < 14; ++i) b.push_back(0);
    }
    pipeline::detail::put_tag(b, "data");
    put32(data_bytes);
    for (auto s : frames_interleaved) put16(static_cast<std::uint16_t>(s));
    return b;
}

double power(const std::vector<double>& x, std::size_t skip) {
    double s = 0.0;
    for (std::size_t i = skip; i + skip < x.size(); ++i) s += x[i] * x[i];
    return s / static_cast<double>(x.size() - 2 * skip);
}

std::vector<double> tone(std::size_t n, double cycles_per_sample) {
    std::vector<double> x(n);
    for (std::size_t t = 0; t < n; ++t) x[t] = std::sin(2.0 * std::numbers::pi * cycles_per_sample * static_cast<double>(t));
    return x;
}

}  // namespace

TEST_CASE("wav decode of known codes") {
    const auto b = wav_bytes(1, 1, 16, {0, 16384, -16384, 32767, -32768});
    const auto w = parse_wav(b);
    CHECK(w.sample_rate == 8000);
    CHECK(w.channels == 1);
    CHECK(w.samples == std::vector<double>{0.0, 0.5, -0.5, 32767.0 / 32768.0, -1.0});
}

TEST_CASE("wav stereo keeps the first channel") {
    const auto w = parse_wav(wav_bytes(1, 2, 16, {100, -7, 200, -7, 300, -7}));
    CHECK(w.channels == 2);
    CHECK(w.samples == std::vector<double>{100 / 32768.0, 200 / 32768.0, 300 / 32768.0});
}

TEST_CASE("wav extensible PCM is accepted") {
    const auto w = parse_wav(wav_bytes(1, 1, 16, {1, 2, 3}, true));
    CHECK(w.samples.size() == 3);
    CHECK_THROWS_AS(parse_wav(wav_bytes(3, 1, 16, {1, 2, 3}, true)), FormatError);
}

TEST_CASE("wav format errors carry byte offsets") {
    auto b = wav_bytes(1, 1, 16, {1, 2, 3});
    SECTION("not RIFF") {
        b[0] = 'X';
        try {
            parse_wav(b);
            FAIL("expected an error");
        } catch (const FormatError& e) {
            CHECK(e.byte_offset() == 0);
        }
    }
    SECTION("wrong codec") {
        try {
            parse_wav(wav_bytes(3, 1, 16, {1}));
            FAIL("expected an error");
        } catch (const FormatError& e) {
            CHECK(e.byte_offset() == 20);
            CHECK(std::string(e.what()).find("byte offset 20") != std::string::npos);
        }
    }
    SECTION("wrong bit depth") {
        CHECK_THROWS_AS(parse_wav(wav_bytes(1, 1, 8, {1})), FormatError);
    }
    SECTION("truncated data") {
        b.resize(b.size() - 2);
        CHECK_THROWS_AS(parse_wav(b), FormatError);
    }
    SECTION("missing file") {
        CHECK_THROWS_AS(read_wav("/nonexistent/definitely_missing.wav"), Error);
    }
}

TEST_CASE("wav write and read round trip") {
    TempDir dir("wav");
    std::vector<double> x;
    for (int code = -32768; code < 32768; code += 97) x.push_back(code / 32768.0);
    x.push_back(2.0);  // saturates
    write_wav(dir.path / "a.wav", x, 16000);
    const auto w = read_wav(dir.path / "a.wav");
    CHECK(w.sample_rate == 16000);
    REQUIRE(w.samples.size() == x.size());
    for (std::size_t i = 0; i + 1 < x.size(); ++i) CHECK(w.samples[i] == x[i]);
    CHECK(w.samples.back() == 32767.0 / 32768.0);
    CHECK(to_pcm16(-3.0) == -32768);
    CHECK(to_pcm16(0.5 / 32768.0) == 1);  // half-way rounds away from zero
}

TEST_CASE("decimate") {
    const auto x = gaussian_signal(100, 1);
    CHECK(decimate(x, 1) == x);
    CHECK_THROWS_AS(decimate(x, 0), Error);
    CHECK(decimate(x, 4).size() == 25);
    CHECK(decimate(gaussian_signal(101, 1), 4).size() == 26);

    const auto k = lowpass_kernel(4);
    double dc = 0.0;
    for (double v : k) dc += v;
    CHECK(dc == Approx(1.0).epsilon(1e-12));
    const auto flat = decimate(std::vector<double>(400, 0.3), 4);
    for (double v : flat) CHECK(v == Approx(0.3).epsilon(1e-6));

    // new Nyquist is 0.125 cycles/sample
    const auto in_band = tone(4096, 0.4 * 0.125);
    const auto out_band = tone(4096, 0.3);
    CHECK(power(decimate(in_band, 4), 16) > 0.45);
    CHECK(power(decimate(out_band, 4), 16) < 0.01 * power(out_band, 0));
}

TEST_CASE("reflect index mirrors whole samples") {
    CHECK(reflect_index(-1, 5) == 1);
    CHECK(reflect_index(-4, 5) == 4);
    CHECK(reflect_index(5, 5) == 3);
    CHECK(reflect_index(8, 5) == 0);
    CHECK(reflect_index(3, 1) == 0);
}

TEST_CASE("window split drops the remainder") {
    std::vector<double> x(10);
    for (std::size_t i = 0; i < 10; ++i) x[i] = static_cast<double>(i);
    const auto w = window_split(x, 4);
    REQUIRE(w.size() == 2);
    CHECK(w[1] == std::vector<double>{4, 5, 6, 7});
    CHECK(window_split(x, 11).empty());
    CHECK_THROWS_AS(window_split(x, 1), Error);
}

TEST_CASE("manifest json round trip and validation") {
    DatasetManifest m{8000.0, 256, 2, {{"a.wav", "normal", Split::Train}, {"b.wav", std::nullopt, Split::Test}}, {}};
    const auto j = manifest_to_json(m);
    CHECK(manifest_from_json(j) == m);
    CHECK_FALSE(j["entries"][1].contains("label"));

    auto minimal = nlohmann::json::parse(R"({"sample_rate": 16000, "window_size": 64, "entries": [{"path": "x.wav"}]})");
    const auto parsed = manifest_from_json(minimal);
    CHECK(parsed.decimate == 1);
    CHECK(parsed.entries[0].split == Split::Train);

    m.entries.push_back({"a.wav", "normal", Split::Test});
    CHECK_THROWS_AS(validate_manifest(m), Error);
    CHECK_THROWS_AS(parse_split("validation"), Error);
    auto bad = minimal;
    bad["window_size"] = 1;
    CHECK_THROWS_AS(manifest_from_json(bad), Error);
    bad = minimal;
    bad.erase("entries");
    CHECK_THROWS_AS(manifest_from_json(bad), Error);
}

TEST_CASE("manifest file paths resolve against the manifest directory") {
    TempDir dir("manifest");
    DatasetManifest m{16000.0, 64, 1, {{"sub/a.wav", "normal", Split::Train}}, {}};
    save_manifest(dir.path / "m.json", m);
    const auto loaded = load_manifest(dir.path / "m.json");
    CHECK(loaded == m);
    CHECK(loaded.resolve(loaded.entries[0]) == dir.path / "sub/a.wav");
    std::ofstream(dir.path / "broken.json") << "{ \"sample_rate\": ";
    CHECK_THROWS_AS(load_manifest(dir.path / "broken.json"), FormatError);
}

TEST_CASE("model json round trip is bit exact for every mode") {
    for (SharingMode mode : kAllModes) {
        const auto model = perturbed_model(5, 8, mode, 0.7, 12);
        const auto text = model_to_json(model).dump(2);
        const auto back = model_from_json(nlohmann::json::parse(text));
        INFO(mode_name(mode));
        CHECK(back == model);
        const auto x = gaussian_signal(200, 3);
        CHECK(model_forward(x, back).reconstruction == model_forward(x, model).reconstruction);
    }
}

TEST_CASE("model json rejects damaged input") {
    auto j = model_to_json(perturbed_model(3, 8, SharingMode::PerLevelCqfHT, 1.0, 1));
    auto wrong_version = j;
    wrong_version["format_version"] = 99;
    CHECK_THROWS_AS(model_from_json(wrong_version), Error);
    auto wrong_taps = j;
    wrong_taps["per_level"][0]["h"].push_back(0.0);
    CHECK_THROWS_AS(model_from_json(wrong_taps), Error);
    auto wrong_mode = j;
    wrong_mode["mode"] = "nonsense";
    CHECK_THROWS_AS(model_from_json(wrong_mode), Error);
}

TEST_CASE("elm and dictionary json round trips") {
    std::vector<std::vector<double>> train;
    for (std::uint64_t s = 0; s < 30; ++s) train.push_back(gaussian_signal(6, s));
    const auto elm = elm_fit(std::span<const std::vector<double>>(train), 12, 1e-3, 4);
    const auto back = elm_from_json(nlohmann::json::parse(elm_to_json(elm).dump()));
    CHECK(back.hidden_weights == elm.hidden_weights);
    CHECK(back.output_weights == elm.output_weights);
    for (const auto& f : train) CHECK(elm_score(back, f) == elm_score(elm, f));

    DictionaryModel dict;
    dict.gamma = 0.5;
    dict.class_models.emplace("A", perturbed_model(3, 8, SharingMode::SharedCqfHT, 0.5, 1));
    dict.class_models.emplace("B", perturbed_model(3, 8, SharingMode::SharedCqfHT, 0.5, 2));
    const auto dback = dictionary_from_json(nlohmann::json::parse(dictionary_to_json(dict).dump()));
    CHECK(dback.gamma == dict.gamma);
    CHECK(dback.class_models == dict.class_models);
}

TEST_CASE("double text is shortest round trip") {
    for (double v : {0.1, -1e-300, 1.0 / 3.0, 123456789.0, 5e-324}) CHECK(parse_double(format_double(v)) == v);
    CHECK(format_double(0.25) == "0.25");
    CHECK_THROWS_AS(parse_double("1.5x"), Error);
    CHECK_THROWS_AS(parse_double(""), Error);
}

TEST_CASE("features csv layout and round trip") {
    const auto model = perturbed_model(4, 8, SharingMode::PerLevelCqfHT, 1.0, 3);
    std::vector<FeatureRow> rows;
    for (std::uint64_t s = 0; s < 3; ++s)
        rows.push_back({"w.wav#" + std::to_string(s), extract_features(gaussian_signal(128, s), model)});
    std::stringstream buf;
    write_features_csv(buf, rows);
    const std::string text = buf.str();
    CHECK(text.rfind("id,res_mean,res_max,l1_mean_1,l1_mean_2,l1_mean_3,l1_mean_4,l1_max_1,l1_max_2,l1_max_3,l1_max_4\n", 0) == 0);
    std::string first_row = text.substr(text.find('\n') + 1);
    first_row = first_row.substr(0, first_row.find('\n'));
    CHECK(split_csv_line(first_row).size() == 3 + 2 * 4);

    const auto back = read_features_csv(buf);
    REQUIRE(back.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(back[i].id == rows[i].id);
        CHECK(back[i].features.flatten() == rows[i].features.flatten());
    }

    std::stringstream bad("id,res_mean,res_max,l1_max_1,l1_mean_1\nx,1,2,3,4\n");
    CHECK_THROWS_AS(read_features_csv(bad), Error);
    rows[0].id = "has,comma";
    std::stringstream sink;
    CHECK_THROWS_AS(write_features_csv(sink, rows), Error);
}

TEST_CASE("scores csv round trip") {
    std::vector<ScoreRow> rows{{"a#0", 0.5}, {"b#1", 1e-9}};
    std::stringstream buf;
    write_scores_csv(buf, rows);
    const auto back = read_scores_csv(buf);
    REQUIRE(back.size() == 2);
    CHECK(back[1].score == 1e-9);
    std::stringstream bad("id,value\n");
    CHECK_THROWS_AS(read_scores_csv(bad), Error);
}

TEST_CASE("synthetic generator") {
    SyntheticSpec spec;
    spec.window = 512;
    SECTION("same seed, same bits") {
        const auto a = anomaly_benchmark(spec, 5, 3, 42);
        const auto b = anomaly_benchmark(spec, 5, 3, 42);
        REQUIRE(a.test.size() == 9);
        for (std::size_t i = 0; i < a.test.size(); ++i) CHECK(a.test[i].samples == b.test[i].samples);
        CHECK_FALSE(anomaly_benchmark(spec, 5, 3, 43).train[0].samples == a.train[0].samples);
    }
    SECTION("noise-free normal window is the enveloped tone sum") {
        spec.sigma = 0.0;
        spec.burst_fraction = 1.0;
        std::mt19937_64 rng(1);
        const auto w = generate_window(SignalKind::Normal, spec, rng);
        for (std::size_t t = 0; t < spec.window; ++t) {
            double expect = 0.0;
            for (std::size_t c = 0; c < 2; ++c) {
                const double env = burst_envelope(t, 0, spec.window, spec.burst_ramp);
                expect += spec.amplitude * env *
                          std::sin(2.0 * std::numbers::pi * spec.normal_hz[c] / spec.sample_rate * static_cast<double>(t) +
                                   w.recipe.phase[c]);
            }
            CHECK(w.samples[t] == Approx(expect).margin(1e-15));
        }
        CHECK(w.recipe.impulse_positions.empty());
    }
    SECTION("impulses raise the median residual peak of a db4 threshold model") {
        const auto set = anomaly_benchmark(spec, 0, 30, 7);
        auto model = build_model(default_levels(spec.window), 8, SharingMode::Db4FixedHT);
        for (auto& t : model.thresholds) t = {0.3, 0.3};
        std::vector<double> normal, impulse;
        for (const auto& w : set.test) {
            const double r = extract_features(w.samples, model).res_max;
            if (w.kind == SignalKind::Normal) normal.push_back(r);
            if (w.kind == SignalKind::Impulse) impulse.push_back(r);
        }
        std::sort(normal.begin(), normal.end());
        std::sort(impulse.begin(), impulse.end());
        CHECK(impulse[15] > normal[15]);
    }
    SECTION("shift moves one tone") {
        std::mt19937_64 rng(3);
        const auto w = generate_window(SignalKind::Shift, spec, rng);
        CHECK(w.recipe.freq_hz[0] == spec.normal_hz[0]);
        CHECK(w.recipe.freq_hz[1] == spec.normal_hz[1] * spec.shift_factor);
    }
    SECTION("generator settings are validated") {
        spec.burst_fraction = 0.0;
        CHECK_THROWS_AS(anomaly_benchmark(spec, 1, 1, 1), Error);
    }
}

TEST_CASE("synthetic dataset on disk loads back as windows") {
    TempDir dir("synth");
    SyntheticSpec spec;
    spec.window = 256;
    write_synthetic_dataset(dir.path, spec, {4, 2, 3, 2}, 5);
    const auto anomaly = load_manifest(dir.path / "anomaly.json");
    CHECK(anomaly.entries.size() == 4 + 3 * 2);
    const auto train = load_windows(anomaly, Split::Train);
    CHECK(train.size() == 4);
    CHECK(train[0].id == "anomaly/train_normal_0000.wav#0");
    const auto direct = anomaly_benchmark(spec, 4, 2, 5);
    for (std::size_t t = 0; t < spec.window; ++t)
        CHECK(std::abs(train[0].samples[t] - direct.train[0].samples[t]) <= 0.5 / 32768.0 + 1e-15);

    const auto classes = load_manifest(dir.path / "classification.json");
    CHECK(classes.entries.size() == 2 * 3 + 2 * 2);
    CHECK(load_windows(classes, Split::Test).size() == 4);

    auto mismatched = anomaly;
    mismatched.sample_rate = 8000.0;
    CHECK_THROWS_AS(load_windows(mismatched), Error);
}

TEST_CASE("auc against a manifest uses labelled test entries") {
    DatasetManifest m{16000.0, 4, 1,
                      {{"n.wav", "normal", Split::Test}, {"i.wav", "impulse", Split::Test}, {"t.wav", "normal", Split::Train}},
                      {}};
    std::vector<ScoreRow> s{{"n.wav#0", 0.1}, {"n.wav#1", 0.2}, {"i.wav#0", 0.9}, {"t.wav#0", 5.0}};
    CHECK(auc_against_manifest(s, m) == 1.0);
    CHECK(id_path("dir/a#b.wav#12") == "dir/a#b.wav");
}
