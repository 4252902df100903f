// Command-line front end: gen-data | train | attack | campaign | render | report.
// Workflows are driven by a key=value config file; flags override config keys
// and OTSA_SEED is the seed fallback. Exit codes: 0 ok, 2 usage/config,
// 3 IO, 4 numerical failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "otsa/attack.hpp"
#include "otsa/classifier.hpp"
#include "otsa/dataio.hpp"
#include "otsa/evaluation.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Config {
    std::map<std::string, std::string> kv;

    bool has(const std::string& key) const { return kv.count(key) > 0; }
    std::string get(const std::string& key, const std::string& fallback) const {
        const auto it = kv.find(key);
        return it == kv.end() ? fallback : it->second;
    }
    double get_double(const std::string& key, double fallback) const {
        const auto it = kv.find(key);
        if (it == kv.end()) return fallback;
        try {
            std::size_t used = 0;
            const double v = std::stod(it->second, &used);
            if (used != it->second.size()) throw std::invalid_argument(it->second);
            return v;
        } catch (const std::exception&) {
            throw otsa::parameter_error("config: bad number for " + key + ": " + it->second);
        }
    }
    long long get_int(const std::string& key, long long fallback) const {
        const auto it = kv.find(key);
        if (it == kv.end()) return fallback;
        try {
            std::size_t used = 0;
            const long long v = std::stoll(it->second, &used);
            if (used != it->second.size()) throw std::invalid_argument(it->second);
            return v;
        } catch (const std::exception&) {
            throw otsa::parameter_error("config: bad integer for " + key + ": " + it->second);
        }
    }
    std::vector<double> get_doubles(const std::string& key,
                                    const std::vector<double>& fallback) const {
        const auto it = kv.find(key);
        if (it == kv.end()) return fallback;
        std::vector<double> values;
        std::stringstream ss(it->second);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            try {
                values.push_back(std::stod(tok));
            } catch (const std::exception&) {
                throw otsa::parameter_error("config: bad list for " + key + ": " + it->second);
            }
        }
        return values;
    }
};

Config load_config(const std::string& path) {
    Config config;
    if (path.empty()) return config;
    std::ifstream is(path);
    if (!is) throw otsa::parameter_error("config: cannot open: " + path);
    std::string line;
    while (std::getline(is, line)) {
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        if (!key.empty()) config.kv[key] = trim(line.substr(eq + 1));
    }
    return config;
}

std::uint64_t resolve_seed(const Config& config, std::optional<std::uint64_t> flag) {
    if (flag) return *flag;
    if (config.has("seed")) return std::uint64_t(config.get_int("seed", 1));
    if (const char* env = std::getenv("OTSA_SEED")) {
        try {
            return std::stoull(env);
        } catch (const std::exception&) {
            throw otsa::parameter_error(std::string("OTSA_SEED is not an integer: ") + env);
        }
    }
    return 1;
}

otsa::SynthConfig synth_config(const Config& config, std::uint64_t seed) {
    otsa::SynthConfig synth;
    synth.num_classes = int(config.get_int("data.classes", 4));
    synth.images_per_class = int(config.get_int("data.images_per_class", 45));
    synth.image_size = int(config.get_int("data.image_size", 128));
    synth.speckle_strength = config.get_double("data.speckle", 0.5);
    synth.seed = otsa::derive_seed(seed, "data");
    return synth;
}

otsa::ImagingParams imaging_params(const Config& config, int grid_m, int grid_n) {
    return otsa::ImagingParams::make(
        config.get_double("imaging.bandwidth_hz", 0.591e9),
        config.get_double("imaging.center_freq_hz", 9.6e9),
        config.get_double("imaging.aperture_rad", 0.05), grid_m, grid_n,
        config.get_double("imaging.speed_of_light", 299792458.0));
}

otsa::AttackConfig attack_config(const Config& config) {
    otsa::AttackConfig attack;
    attack.n_scatterers = int(config.get_int("attack.n_scatterers", 1));
    attack.lambda = config.get_double("attack.lambda", 10.0);
    attack.sigma = config.get_double("attack.sigma", 0.4);
    attack.max_score = config.get_double("attack.max_score", 0.5);
    attack.step_size = config.get_double("attack.step_size", 0.1);
    attack.position_step_scale = config.get_double("attack.position_step_scale", 5.0);
    attack.max_iters = int(config.get_int("attack.max_iters", 200));
    attack.tau = config.get_double("attack.tau", 0.10);
    const auto lo = config.get_doubles("attack.theta_min", {0, 0, 0, -1, 0, 0, -1});
    const auto hi = config.get_doubles("attack.theta_max", {10, 87, 87, 1, 2, 5, 1});
    if (lo.size() != otsa::kParamCount || hi.size() != otsa::kParamCount)
        throw otsa::parameter_error("config: theta bounds need exactly 7 values");
    for (int p = 0; p < otsa::kParamCount; ++p) {
        attack.theta_min[p] = lo[p];
        attack.theta_max[p] = hi[p];
    }
    return attack;
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw otsa::io_error("cannot create directory: " + dir + " (" + ec.message() + ")");
}

struct Dataset {
    std::vector<otsa::LabeledSample> samples;
};

Dataset load_dataset(const std::string& manifest_path) {
    Dataset ds;
    const std::string base = fs::path(manifest_path).parent_path().string();
    for (const otsa::ManifestEntry& entry : otsa::load_manifest(manifest_path)) {
        otsa::LabeledSample sample = otsa::load_sample(entry, base.empty() ? "." : base);
        ds.samples.push_back(std::move(sample));
    }
    return ds;
}

// Center crop to the model input plus per-image max normalization; the mask
// falls back to threshold segmentation when the manifest carried none.
otsa::LabeledSample preprocess(const otsa::LabeledSample& sample, int input_size) {
    otsa::CroppedSample crop = otsa::center_crop(sample.image, sample.mask, input_size);
    otsa::LabeledSample out;
    out.id = sample.id;
    out.label = sample.label;
    out.image = otsa::normalize_max(crop.image);
    out.mask = crop.mask.empty() ? otsa::threshold_segment(out.image, 0.5) : crop.mask;
    return out;
}

int cmd_gen_data(const Config& config, std::uint64_t seed, const std::string& out_dir) {
    const otsa::SynthConfig synth = synth_config(config, seed);
    const int train_per_class =
        int(config.get_int("data.train_per_class",
                           std::max(1, synth.images_per_class * 28 / 45)));
    if (train_per_class >= synth.images_per_class)
        throw otsa::parameter_error("config: data.train_per_class must leave test images");

    const std::vector<otsa::LabeledSample> samples = otsa::generate_synthetic_dataset(synth);
    const std::string data_dir = (fs::path(out_dir) / "data").string();
    ensure_dir((fs::path(data_dir) / "images").string());
    ensure_dir((fs::path(data_dir) / "masks").string());

    std::vector<otsa::ManifestEntry> train_entries, test_entries;
    std::map<int, int> per_class_counter;
    for (const otsa::LabeledSample& s : samples) {
        const std::string image_rel = "images/" + s.id + ".pgm";
        const std::string mask_rel = "masks/" + s.id + ".pbm";
        otsa::save_image(s.image, (fs::path(data_dir) / image_rel).string());
        otsa::save_mask(s.mask, (fs::path(data_dir) / mask_rel).string());
        otsa::ManifestEntry entry{s.id, image_rel, mask_rel, s.label};
        if (per_class_counter[s.label]++ < train_per_class)
            train_entries.push_back(entry);
        else
            test_entries.push_back(entry);
    }
    otsa::save_manifest(train_entries, (fs::path(data_dir) / "manifest_train.json").string());
    otsa::save_manifest(test_entries, (fs::path(data_dir) / "manifest_test.json").string());
    std::cout << "wrote " << samples.size() << " samples (" << train_entries.size()
              << " train, " << test_entries.size() << " test) under " << data_dir << "\n";
    return 0;
}

int cmd_train(const Config& config, std::uint64_t seed, const std::string& out_dir) {
    const std::string data_dir = (fs::path(out_dir) / "data").string();
    const std::string train_manifest =
        config.get("train.manifest", (fs::path(data_dir) / "manifest_train.json").string());
    const std::string test_manifest =
        config.get("train.test_manifest", (fs::path(data_dir) / "manifest_test.json").string());

    otsa::ModelSpec spec;
    spec.input_size = int(config.get_int("model.input_size", 88));
    spec.num_classes = int(config.get_int("data.classes", 4));

    auto to_train = [](const Dataset& ds) {
        std::vector<otsa::TrainSample> set;
        for (const otsa::LabeledSample& s : ds.samples) set.push_back({s.image, s.label});
        return set;
    };
    const Dataset train_ds = load_dataset(train_manifest);
    const Dataset test_ds = load_dataset(test_manifest);

    otsa::TrainConfig tc;
    tc.epochs = int(config.get_int("train.epochs", 60));
    tc.learning_rate = config.get_double("train.learning_rate", 0.1);
    tc.batch_size = int(config.get_int("train.batch_size", 32));
    tc.augment_crops = config.get_int("train.augment", 0) != 0;
    tc.seed = otsa::derive_seed(seed, "train");

    const otsa::TrainResult result =
        otsa::train(to_train(train_ds), to_train(test_ds), spec, tc);
    ensure_dir(out_dir);
    const std::string weights_path =
        config.get("train.weights", (fs::path(out_dir) / "weights.bin").string());
    otsa::save_weights(result.weights, weights_path);
    std::cout.setf(std::ios::fixed);
    std::cout.precision(3);
    std::cout << "accuracy " << result.heldout_accuracy << "\n";
    std::cout << "weights " << weights_path << "\n";
    return 0;
}

json scatterers_to_json(const otsa::ScattererSet& set) {
    json arr = json::array();
    for (const otsa::ScattererParams& theta : set.scatterers) {
        const auto a = theta.to_array();
        arr.push_back(std::vector<double>(a.begin(), a.end()));
    }
    return arr;
}

int cmd_attack(const Config& config, std::uint64_t seed, const std::string& out_dir,
               const std::string& kind, const std::string& image_id, double epsilon) {
    const std::string data_dir = (fs::path(out_dir) / "data").string();
    const Dataset test_ds =
        load_dataset(config.get("train.test_manifest",
                                (fs::path(data_dir) / "manifest_test.json").string()));
    const otsa::Weights model = otsa::load_weights(
        config.get("train.weights", (fs::path(out_dir) / "weights.bin").string()));

    const otsa::LabeledSample* found = nullptr;
    for (const otsa::LabeledSample& s : test_ds.samples)
        if (s.id == image_id) found = &s;
    if (!found) throw otsa::parameter_error("attack: unknown image id: " + image_id);

    const otsa::LabeledSample sample = preprocess(*found, model.spec.input_size);
    const otsa::ImagingParams xi =
        imaging_params(config, model.spec.input_size, model.spec.input_size);

    ensure_dir(out_dir);
    const std::string stem =
        (fs::path(out_dir) / ("attack_" + image_id + "_" + kind)).string();
    otsa::save_image(sample.image, stem + "_clean.pgm");

    json doc;
    doc["id"] = image_id;
    doc["kind"] = kind;
    doc["label"] = sample.label;

    if (kind == "fgsm") {
        const otsa::SarImage adv = otsa::fgsm(sample.image, sample.label, model, epsilon);
        const otsa::Prediction post = otsa::predict(model, adv);
        otsa::save_image(adv, stem + "_perturbed.pgm");
        doc["epsilon"] = epsilon;
        doc["success"] = post.predicted_class != sample.label;
        doc["predicted_class"] = post.predicted_class;
        doc["probabilities"] = post.probabilities;
        doc["confidence"] = post.probabilities[sample.label];
    } else {
        otsa::AttackConfig attack = attack_config(config);
        attack.seed = otsa::derive_seed(seed, "attack/" + kind + "/" + image_id);
        const otsa::AttackResult result =
            kind == "otsa"
                ? otsa::run_otsa(sample.image, sample.label, sample.mask, model, attack, xi)
                : otsa::run_baseline(sample.image, sample.label, sample.mask, model, attack,
                                     xi);
        otsa::save_image(result.perturbed, stem + "_perturbed.pgm");
        otsa::save_image(otsa::render_image(result.scatterers, xi), stem + "_scatterers.pgm");
        doc["success"] = result.success;
        doc["iterations"] = result.iterations;
        doc["confidence"] = result.ground_truth_confidence;
        doc["predicted_class"] = result.prediction.predicted_class;
        doc["probabilities"] = result.prediction.probabilities;
        doc["scatterers"] = scatterers_to_json(result.scatterers);
        doc["on_target"] = result.on_target;
    }

    std::ofstream os(stem + ".json");
    if (!os) throw otsa::io_error("attack: cannot write " + stem + ".json");
    os << doc.dump(2) << "\n";
    std::cout << doc.dump(2) << "\n";
    return 0;
}

int cmd_campaign(const Config& config, std::uint64_t seed, const std::string& out_dir,
                 int jobs_flag) {
    const std::string data_dir = (fs::path(out_dir) / "data").string();
    const Dataset test_ds =
        load_dataset(config.get("train.test_manifest",
                                (fs::path(data_dir) / "manifest_test.json").string()));
    const otsa::Weights model = otsa::load_weights(
        config.get("train.weights", (fs::path(out_dir) / "weights.bin").string()));

    std::vector<otsa::LabeledSample> prepared;
    for (const otsa::LabeledSample& s : test_ds.samples)
        prepared.push_back(preprocess(s, model.spec.input_size));

    otsa::CampaignConfig campaign;
    campaign.attack = attack_config(config);
    campaign.n_list.clear();
    for (double n : config.get_doubles("campaign.n_list", {1, 2, 3}))
        campaign.n_list.push_back(int(n));
    campaign.per_class = int(config.get_int("campaign.per_class", 0));
    campaign.run_fgsm = config.get_int("campaign.fgsm", 0) != 0;
    campaign.fgsm_epsilon = config.get_double("campaign.fgsm_epsilon", 0.05);
    campaign.jobs = jobs_flag > 0 ? jobs_flag : int(config.get_int("campaign.jobs", 1));
    campaign.seeds.clear();
    for (double s : config.get_doubles("campaign.seeds", {}))
        campaign.seeds.push_back(std::uint64_t(s));
    if (campaign.seeds.empty()) campaign.seeds = {otsa::derive_seed(seed, "campaign")};

    const otsa::ImagingParams xi =
        imaging_params(config, model.spec.input_size, model.spec.input_size);
    const otsa::CampaignReport report =
        otsa::run_campaign(prepared, model, campaign, xi);

    ensure_dir(out_dir);
    otsa::ReportPaths paths;
    paths.csv = (fs::path(out_dir) / "report.csv").string();
    paths.json = (fs::path(out_dir) / "report.json").string();
    paths.svg = (fs::path(out_dir) / "report.svg").string();
    otsa::emit_report(report, paths);

    std::cout << "prefiltered " << report.prefiltered_count << " of "
              << prepared.size() << " images\n";
    std::cout.setf(std::ios::fixed);
    std::cout.precision(3);
    for (const otsa::AttackSummary& s : report.summaries)
        std::cout << s.label << " success_rate=" << s.success_rate
                  << " on_target=" << s.mean_on_target_fraction << " (n=" << s.sample_size
                  << ")\n";
    std::cout << "report " << paths.csv << "\n";
    return 0;
}

int cmd_render(const Config& config, const std::string& out_dir,
               const std::vector<std::string>& params, const std::string& out_image) {
    otsa::ScattererSet set;
    for (const std::string& spec : params) {
        std::vector<double> values;
        std::stringstream ss(spec);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            try {
                values.push_back(std::stod(tok));
            } catch (const std::exception&) {
                throw otsa::parameter_error("render: bad --params value: " + spec);
            }
        }
        if (values.size() != otsa::kParamCount)
            throw otsa::parameter_error("render: --params needs 7 comma-separated values");
        std::array<double, otsa::kParamCount> a;
        std::copy(values.begin(), values.end(), a.begin());
        set.scatterers.push_back(otsa::ScattererParams::from_array(a));
    }
    const int grid_m = int(config.get_int("imaging.grid_m", 128));
    const int grid_n = int(config.get_int("imaging.grid_n", 128));
    const otsa::ImagingParams xi = imaging_params(config, grid_m, grid_n);
    const otsa::SarImage image = otsa::render_image(set, xi);

    std::string path = out_image;
    if (path.empty()) {
        ensure_dir(out_dir);
        path = (fs::path(out_dir) / "render.pgm").string();
    }
    otsa::save_image(image, path);
    const auto [px, py] = image.argmax();
    std::cout << "rendered " << set.size() << " scatterer(s) to " << path << " (argmax "
              << px << "," << py << ")\n";
    return 0;
}

int cmd_report(const std::string& csv_path, const std::string& out_dir) {
    const std::vector<otsa::ImageOutcome> outcomes = otsa::parse_outcomes_csv(csv_path);
    otsa::CampaignReport report = otsa::summarize_outcomes(outcomes);
    report.prefiltered_count = int(outcomes.size());
    ensure_dir(out_dir);
    otsa::ReportPaths paths;
    paths.json = (fs::path(out_dir) / "report_summary.json").string();
    paths.svg = (fs::path(out_dir) / "report_summary.svg").string();
    otsa::emit_report(report, paths);
    std::cout << "summarized " << outcomes.size() << " outcomes to " << paths.json << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"scatterer-based adversarial attacks on SAR image classifiers"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out";
    std::optional<std::uint64_t> seed_flag;
    app.add_option("--config", config_path, "key=value config file");
    app.add_option("--out", out_dir, "output directory (default: out)");
    app.add_option("--seed", seed_flag, "root seed (overrides config and OTSA_SEED)");

    CLI::App* gen = app.add_subcommand("gen-data", "generate the synthetic dataset");
    CLI::App* train = app.add_subcommand("train", "train the classifier");
    CLI::App* attack = app.add_subcommand("attack", "attack one image");
    std::string kind = "otsa", image_id;
    double epsilon = 0.05;
    attack->add_option("--kind", kind, "otsa | baseline | fgsm")
        ->check(CLI::IsMember({"otsa", "baseline", "fgsm"}));
    attack->add_option("--image", image_id, "sample id from the test manifest")->required();
    attack->add_option("--epsilon", epsilon, "FGSM step");
    CLI::App* campaign = app.add_subcommand("campaign", "run the comparative campaign");
    int jobs = 0;
    campaign->add_option("--jobs", jobs, "worker threads (default: campaign.jobs or 1)");
    CLI::App* render = app.add_subcommand("render", "render scatterers to an image");
    std::vector<std::string> params;
    std::string out_image;
    render->add_option("--params", params, "7 comma-separated values A,x,y,gamma,L,alpha,phi_bar")
        ->required();
    render->add_option("--out-image", out_image, "output PGM path");
    CLI::App* report = app.add_subcommand("report", "summarize an outcomes CSV");
    std::string csv_path;
    report->add_option("--csv", csv_path, "outcomes CSV from a campaign")->required();

    try {
        app.parse(argc, argv);
        const Config config = load_config(config_path);
        const std::uint64_t seed = resolve_seed(config, seed_flag);
        if (gen->parsed()) return cmd_gen_data(config, seed, out_dir);
        if (train->parsed()) return cmd_train(config, seed, out_dir);
        if (attack->parsed()) return cmd_attack(config, seed, out_dir, kind, image_id, epsilon);
        if (campaign->parsed()) return cmd_campaign(config, seed, out_dir, jobs);
        if (render->parsed()) return cmd_render(config, out_dir, params, out_image);
        if (report->parsed()) return cmd_report(csv_path, out_dir);
        return 2;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const otsa::parameter_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const otsa::format_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const otsa::io_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const otsa::numerical_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
