#include "otsa/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace otsa {

namespace {

using json = nlohmann::json;

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::string attack_kind_name(AttackKind kind) {
    switch (kind) {
        case AttackKind::kOtsa:
            return "otsa";
        case AttackKind::kBaseline:
            return "baseline";
        case AttackKind::kFgsm:
            return "fgsm";
    }
    return "unknown";
}

std::vector<LabeledSample> prefilter_correct(const Weights& model,
                                             const std::vector<LabeledSample>& samples) {
    std::vector<LabeledSample> kept;
    for (const LabeledSample& s : samples)
        if (predict(model, s.image).predicted_class == s.label) kept.push_back(s);
    return kept;
}

ImageOutcome enforce_positioning_filter(const AttackResult& result, const SarImage& clean,
                                        int label, const TargetMask& mask,
                                        const Weights& model, const ImagingParams& xi) {
    ScattererSet kept;
    for (const ScattererParams& theta : result.scatterers.scatterers)
        if (is_on_target(theta.x, theta.y, mask)) kept.scatterers.push_back(theta);

    SarImage adv = clean;
    if (!kept.empty()) {
        const SarImage render = render_image(kept, xi);
        for (std::size_t i = 0; i < adv.v.size(); ++i) adv.v[i] += render.v[i];
    }
    const Prediction post = predict(model, adv);

    ImageOutcome outcome;
    outcome.post_pred = post.predicted_class;
    outcome.success = post.predicted_class != label;
    outcome.n_kept = int(kept.size());
    outcome.iterations = result.iterations;
    outcome.on_target_fraction =
        result.scatterers.empty()
            ? 0.0
            : double(kept.size()) / double(result.scatterers.size());
    return outcome;
}

double success_rate(const std::vector<ImageOutcome>& outcomes) {
    if (outcomes.empty()) throw parameter_error("success_rate: no outcomes");
    std::size_t hits = 0;
    for (const ImageOutcome& o : outcomes) hits += o.success ? 1 : 0;
    return double(hits) / double(outcomes.size());
}

namespace {

struct CampaignTask {
    std::string label;
    AttackKind kind = AttackKind::kOtsa;
    int n_scatterers = 0;
    std::size_t sample_index = 0;
    std::uint64_t seed = 0;
};

std::string snapshot_config(const CampaignConfig& config, const ImagingParams& xi) {
    std::ostringstream os;
    os << "attack.lambda=" << format_double(config.attack.lambda) << "\n";
    os << "attack.max_iters=" << config.attack.max_iters << "\n";
    os << "attack.max_score=" << format_double(config.attack.max_score) << "\n";
    os << "attack.position_step_scale=" << format_double(config.attack.position_step_scale)
       << "\n";
    os << "attack.sigma=" << format_double(config.attack.sigma) << "\n";
    os << "attack.step_size=" << format_double(config.attack.step_size) << "\n";
    os << "attack.tau=" << format_double(config.attack.tau) << "\n";
    auto bounds = [&os](const char* key, const std::array<double, kParamCount>& b) {
        os << key << "=";
        for (int p = 0; p < kParamCount; ++p) os << (p ? "," : "") << format_double(b[p]);
        os << "\n";
    };
    bounds("attack.theta_max", config.attack.theta_max);
    bounds("attack.theta_min", config.attack.theta_min);
    os << "campaign.fgsm_epsilon=" << format_double(config.fgsm_epsilon) << "\n";
    os << "campaign.n_list=";
    for (std::size_t i = 0; i < config.n_list.size(); ++i)
        os << (i ? "," : "") << config.n_list[i];
    os << "\n";
    os << "campaign.per_class=" << config.per_class << "\n";
    os << "campaign.seeds=";
    for (std::size_t i = 0; i < config.seeds.size(); ++i)
        os << (i ? "," : "") << config.seeds[i];
    os << "\n";
    os << "imaging.aperture_rad=" << format_double(xi.aperture_rad) << "\n";
    os << "imaging.bandwidth_hz=" << format_double(xi.bandwidth_hz) << "\n";
    os << "imaging.center_freq_hz=" << format_double(xi.center_freq_hz) << "\n";
    os << "imaging.grid=" << xi.m_star << "x" << xi.n_star << "\n";
    return os.str();
}

}  // namespace

CampaignReport run_campaign(const std::vector<LabeledSample>& samples, const Weights& model,
                            const CampaignConfig& config, const ImagingParams& xi) {
    if (config.seeds.empty()) throw parameter_error("campaign: need at least one seed");
    config.attack.validate();

    std::vector<LabeledSample> pool = prefilter_correct(model, samples);
    if (config.per_class > 0) {
        std::map<int, std::vector<std::size_t>> by_class;
        for (std::size_t i = 0; i < pool.size(); ++i) by_class[pool[i].label].push_back(i);
        std::vector<std::size_t> chosen;
        for (auto& [cls, indices] : by_class) {
            std::mt19937_64 rng(
                derive_seed(config.seeds.front(), "balance/" + std::to_string(cls)));
            std::shuffle(indices.begin(), indices.end(), rng);
            const std::size_t take = std::min<std::size_t>(indices.size(), config.per_class);
            chosen.insert(chosen.end(), indices.begin(), indices.begin() + take);
        }
        std::sort(chosen.begin(), chosen.end());
        std::vector<LabeledSample> balanced;
        for (std::size_t i : chosen) balanced.push_back(pool[i]);
        pool = std::move(balanced);
    }

    CampaignReport report;
    report.prefiltered_count = int(pool.size());
    report.config_snapshot = snapshot_config(config, xi);
    if (pool.empty()) return report;

    std::vector<CampaignTask> tasks;
    auto add_attack = [&](const std::string& label, AttackKind kind, int n) {
        for (std::size_t s = 0; s < pool.size(); ++s)
            for (std::uint64_t seed : config.seeds)
                tasks.push_back({label, kind, n, s, seed});
    };
    for (int n : config.n_list) {
        if (config.run_otsa) add_attack("otsa_n" + std::to_string(n), AttackKind::kOtsa, n);
        if (config.run_baseline)
            add_attack("baseline_n" + std::to_string(n), AttackKind::kBaseline, n);
    }
    if (config.run_fgsm) add_attack("fgsm", AttackKind::kFgsm, 0);

    std::vector<ImageOutcome> outcomes(tasks.size());
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr first_error;

    auto worker = [&]() {
        while (true) {
            const std::size_t t = next.fetch_add(1);
            if (t >= tasks.size()) return;
            try {
                const CampaignTask& task = tasks[t];
                const LabeledSample& sample = pool[task.sample_index];
                ImageOutcome outcome;
                if (task.kind == AttackKind::kFgsm) {
                    const SarImage adv =
                        fgsm(sample.image, sample.label, model, config.fgsm_epsilon);
                    const Prediction post = predict(model, adv);
                    outcome.post_pred = post.predicted_class;
                    outcome.success = post.predicted_class != sample.label;
                    outcome.iterations = 1;
                } else {
                    AttackConfig attack = config.attack;
                    attack.n_scatterers = task.n_scatterers;
                    attack.seed =
                        derive_seed(task.seed, "attack/" + task.label + "/" + sample.id);
                    const AttackResult result =
                        task.kind == AttackKind::kOtsa
                            ? run_otsa(sample.image, sample.label, sample.mask, model, attack,
                                       xi)
                            : run_baseline(sample.image, sample.label, sample.mask, model,
                                           attack, xi);
                    outcome = enforce_positioning_filter(result, sample.image, sample.label,
                                                         sample.mask, model, xi);
                }
                outcome.id = sample.id;
                outcome.attack = tasks[t].label;
                outcome.pre_pred = sample.label;  // prefiltered: model was correct
                outcomes[t] = std::move(outcome);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };

    const int jobs = std::max(1, config.jobs);
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (int j = 0; j < jobs; ++j) threads.emplace_back(worker);
        for (std::thread& th : threads) th.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    report.outcomes = std::move(outcomes);

    std::map<std::string, std::vector<const ImageOutcome*>> grouped;
    for (const ImageOutcome& o : report.outcomes) grouped[o.attack].push_back(&o);
    for (const CampaignTask& task : tasks) {
        if (!grouped.count(task.label)) continue;
        const auto group = grouped.extract(task.label);
        AttackSummary summary;
        summary.label = task.label;
        summary.kind = task.kind;
        summary.n_scatterers = task.n_scatterers;
        summary.sample_size = int(group.mapped().size());
        double successes = 0.0, fraction = 0.0;
        for (const ImageOutcome* o : group.mapped()) {
            successes += o->success ? 1.0 : 0.0;
            fraction += o->on_target_fraction;
        }
        summary.success_rate = successes / double(summary.sample_size);
        summary.mean_on_target_fraction = fraction / double(summary.sample_size);
        report.summaries.push_back(summary);
    }
    return report;
}

// ---------------------------------------------------------------------------
// Report files

namespace {

std::string csv_quote(const std::string& field) {
    if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
    std::string quoted = "\"";
    for (char c : field) {
        if (c == '"') quoted += '"';
        quoted += c;
    }
    quoted += '"';
    return quoted;
}

constexpr const char* kCsvHeader = "id,attack,pre_pred,post_pred,success,n_kept,iters";

}  // namespace

void emit_report(const CampaignReport& report, const ReportPaths& paths) {
    if (!paths.csv.empty()) {
        std::ofstream os(paths.csv, std::ios::binary);
        if (!os) throw io_error("report: cannot open for writing: " + paths.csv);
        os << kCsvHeader << "\n";
        for (const ImageOutcome& o : report.outcomes) {
            os << csv_quote(o.id) << "," << csv_quote(o.attack) << "," << o.pre_pred << ","
               << o.post_pred << "," << (o.success ? "true" : "false") << "," << o.n_kept
               << "," << o.iterations << "\n";
        }
        if (!os) throw io_error("report: write failed: " + paths.csv);
    }

    if (!paths.json.empty()) {
        json doc;
        doc["sample_size"] = report.prefiltered_count;
        doc["empty"] = report.outcomes.empty();
        doc["attacks"] = json::array();
        for (const AttackSummary& s : report.summaries) {
            doc["attacks"].push_back({{"label", s.label},
                                      {"kind", attack_kind_name(s.kind)},
                                      {"n_scatterers", s.n_scatterers},
                                      {"success_rate", s.success_rate},
                                      {"mean_on_target_fraction", s.mean_on_target_fraction},
                                      {"sample_size", s.sample_size}});
        }
        doc["config"] = report.config_snapshot;
        std::ofstream os(paths.json, std::ios::binary);
        if (!os) throw io_error("report: cannot open for writing: " + paths.json);
        os << doc.dump(2) << "\n";
        if (!os) throw io_error("report: write failed: " + paths.json);
    }

    if (!paths.svg.empty()) {
        // Simple grouped bar chart: one bar per attack label, height linear in
        // the success rate.
        constexpr double kBarWidth = 48.0, kGap = 16.0, kPlotHeight = 400.0;
        constexpr double kMarginLeft = 60.0, kMarginTop = 40.0, kMarginBottom = 60.0;
        const std::size_t bars = report.summaries.size();
        const double width = kMarginLeft + bars * (kBarWidth + kGap) + kGap + 20.0;
        const double height = kMarginTop + kPlotHeight + kMarginBottom;

        std::ostringstream os;
        char buf[160];
        auto num = [&buf](double v) {
            std::snprintf(buf, sizeof(buf), "%.2f", v);
            return std::string(buf);
        };
        os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width)
           << "\" height=\"" << num(height) << "\">\n";
        os << "  <text x=\"" << num(kMarginLeft) << "\" y=\"24\" font-size=\"16\">"
           << "Attack success rates</text>\n";
        os << "  <line x1=\"" << num(kMarginLeft - 8) << "\" y1=\""
           << num(kMarginTop + kPlotHeight) << "\" x2=\"" << num(width - 12) << "\" y2=\""
           << num(kMarginTop + kPlotHeight) << "\" stroke=\"black\"/>\n";
        for (std::size_t i = 0; i < bars; ++i) {
            const AttackSummary& s = report.summaries[i];
            const double bar_height = s.success_rate * kPlotHeight;
            const double x = kMarginLeft + kGap + i * (kBarWidth + kGap);
            const double y = kMarginTop + kPlotHeight - bar_height;
            const char* fill = s.kind == AttackKind::kOtsa
                                   ? "#c23b22"
                                   : (s.kind == AttackKind::kBaseline ? "#7851a9" : "#6b8e23");
            os << "  <rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\""
               << num(kBarWidth) << "\" height=\"" << num(bar_height) << "\" fill=\"" << fill
               << "\"/>\n";
            os << "  <text x=\"" << num(x) << "\" y=\"" << num(kMarginTop + kPlotHeight + 16)
               << "\" font-size=\"10\">" << s.label << "</text>\n";
            os << "  <text x=\"" << num(x) << "\" y=\"" << num(y - 4) << "\" font-size=\"10\">"
               << num(s.success_rate) << "</text>\n";
        }
        os << "</svg>\n";

        std::ofstream file(paths.svg, std::ios::binary);
        if (!file) throw io_error("report: cannot open for writing: " + paths.svg);
        file << os.str();
        if (!file) throw io_error("report: write failed: " + paths.svg);
    }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else {
            field += c;
        }
    }
    fields.push_back(std::move(field));
    return fields;
}

int parse_int_field(const std::string& s, const char* field) {
    try {
        std::size_t used = 0;
        const int v = std::stoi(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw format_error(field, std::string("csv: bad integer in ") + field + ": " + s);
    }
}

}  // namespace

std::vector<ImageOutcome> parse_outcomes_csv(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("csv: cannot open: " + path);
    std::string line;
    if (!std::getline(is, line)) throw format_error("header", "csv: empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kCsvHeader)
        throw format_error("header", "csv: unexpected header: " + line);

    std::vector<ImageOutcome> outcomes;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::vector<std::string> f = split_csv_line(line);
        if (f.size() != 7)
            throw format_error("row", "csv: expected 7 fields, got " +
                                          std::to_string(f.size()));
        ImageOutcome o;
        o.id = f[0];
        o.attack = f[1];
        o.pre_pred = parse_int_field(f[2], "pre_pred");
        o.post_pred = parse_int_field(f[3], "post_pred");
        if (f[4] != "true" && f[4] != "false")
            throw format_error("success", "csv: success must be true or false: " + f[4]);
        o.success = f[4] == "true";
        o.n_kept = parse_int_field(f[5], "n_kept");
        o.iterations = parse_int_field(f[6], "iters");
        // The filter keeps exactly the on-target scatterers, so the fraction
        // is recoverable from n_kept and the N encoded in the label.
        const std::size_t pos = o.attack.rfind("_n");
        if (pos != std::string::npos) {
            const int n = parse_int_field(o.attack.substr(pos + 2), "attack");
            if (n > 0) o.on_target_fraction = double(o.n_kept) / double(n);
        }
        outcomes.push_back(std::move(o));
    }
    return outcomes;
}

CampaignReport summarize_outcomes(const std::vector<ImageOutcome>& outcomes) {
    CampaignReport report;
    report.outcomes = outcomes;

    std::vector<std::string> order;
    std::map<std::string, std::vector<const ImageOutcome*>> grouped;
    for (const ImageOutcome& o : outcomes) {
        if (!grouped.count(o.attack)) order.push_back(o.attack);
        grouped[o.attack].push_back(&o);
    }
    for (const std::string& label : order) {
        const auto& group = grouped[label];
        AttackSummary summary;
        summary.label = label;
        const std::size_t pos = label.rfind("_n");
        if (label.rfind("otsa", 0) == 0)
            summary.kind = AttackKind::kOtsa;
        else if (label.rfind("baseline", 0) == 0)
            summary.kind = AttackKind::kBaseline;
        else
            summary.kind = AttackKind::kFgsm;
        if (pos != std::string::npos) {
            try {
                summary.n_scatterers = std::stoi(label.substr(pos + 2));
            } catch (const std::exception&) {
                summary.n_scatterers = 0;
            }
        }
        summary.sample_size = int(group.size());
        double successes = 0.0, fraction = 0.0;
        for (const ImageOutcome* o : group) {
            successes += o->success ? 1.0 : 0.0;
            fraction += o->on_target_fraction;
        }
        summary.success_rate = successes / double(group.size());
        summary.mean_on_target_fraction = fraction / double(group.size());
        report.summaries.push_back(summary);
    }
    return report;
}

}  // namespace otsa
