// SPDX-License-Identifier: Apache-2.0
#include "maye/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>

#include "maye/errors.hpp"
#include "maye/evalscheme.hpp"

namespace maye {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("report: cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

/// Key-path diff between two flattened configs.
std::string config_diff(const json& a, const json& b) {
    const json fa = a.flatten();
    const json fb = b.flatten();
    std::string diff;
    for (const auto& [key, value] : fa.items()) {
        if (!fb.contains(key)) {
            diff += "  " + key + ": " + value.dump() + " vs <missing>\n";
        } else if (fb.at(key) != value) {
            diff += "  " + key + ": " + value.dump() + " vs " + fb.at(key).dump() + "\n";
        }
    }
    for (const auto& [key, value] : fb.items()) {
        if (!fa.contains(key)) diff += "  " + key + ": <missing> vs " + value.dump() + "\n";
    }
    return diff;
}

struct RunMetrics {
    std::vector<MetricsRecord> train;
    std::vector<EvalRecord> eval;
};

/// Per-epoch training accuracy: the cumulative tally carried by the last
/// generation step of each epoch.
Curve epoch_accuracy_curve(const std::vector<MetricsRecord>& rows) {
    Curve c;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const bool last_of_epoch = i + 1 == rows.size() || rows[i + 1].epoch != rows[i].epoch;
        if (last_of_epoch) {
            c.x.push_back(static_cast<double>(rows[i].epoch));
            c.y.push_back(rows[i].train_accuracy);
        }
    }
    return c;
}

Curve step_curve(const std::vector<MetricsRecord>& rows,
                 const std::function<std::optional<double>(const MetricsRecord&)>& pick) {
    Curve c;
    for (const MetricsRecord& r : rows) {
        if (const auto v = pick(r)) {
            c.x.push_back(static_cast<double>(r.generation_step));
            c.y.push_back(*v);
        }
    }
    return c;
}

Curve eval_curve(const std::vector<EvalRecord>& rows, EvalConfigId config) {
    Curve c;
    for (const EvalRecord& r : rows) {
        if (r.config == config && r.split == Split::Validation) {
            c.x.push_back(static_cast<double>(r.epoch));
            c.y.push_back(r.accuracy);
        }
    }
    return c;
}

std::string svg_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string tick_label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

/// Mean line with a mean±std band, fixed layout, no external assets.
std::string render_svg(const std::string& title, const std::string& x_label,
                       const RunAggregate& agg) {
    constexpr double kW = 640, kH = 400, kL = 64, kR = 20, kT = 44, kB = 52;
    const double plot_w = kW - kL - kR;
    const double plot_h = kH - kT - kB;

    double x_min = agg.x.front(), x_max = agg.x.back();
    for (double v : agg.x) {
        x_min = std::min(x_min, v);
        x_max = std::max(x_max, v);
    }
    if (x_min == x_max) {
        x_min -= 0.5;
        x_max += 0.5;
    }
    double y_min = agg.mean[0] - agg.stddev[0], y_max = agg.mean[0] + agg.stddev[0];
    for (std::size_t i = 0; i < agg.mean.size(); ++i) {
        y_min = std::min(y_min, agg.mean[i] - agg.stddev[i]);
        y_max = std::max(y_max, agg.mean[i] + agg.stddev[i]);
    }
    if (y_min == y_max) {
        y_min -= 0.05;
        y_max += 0.05;
    }
    const double y_pad = 0.05 * (y_max - y_min);
    y_min -= y_pad;
    y_max += y_pad;

    const auto sx = [&](double v) { return kL + (v - x_min) / (x_max - x_min) * plot_w; };
    const auto sy = [&](double v) { return kT + (y_max - v) / (y_max - y_min) * plot_h; };

    std::string s;
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 640 400\" "
         "font-family=\"sans-serif\" font-size=\"12\">\n";
    s += "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
    s += "<text x=\"320\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" + title +
         "</text>\n";

    if (agg.x.size() > 1) {
        std::string band = "<polygon fill=\"#4c72b0\" fill-opacity=\"0.25\" points=\"";
        for (std::size_t i = 0; i < agg.x.size(); ++i) {
            band += svg_number(sx(agg.x[i])) + "," + svg_number(sy(agg.mean[i] + agg.stddev[i])) + " ";
        }
        for (std::size_t i = agg.x.size(); i-- > 0;) {
            band += svg_number(sx(agg.x[i])) + "," + svg_number(sy(agg.mean[i] - agg.stddev[i])) + " ";
        }
        band += "\"/>\n";
        s += band;

        std::string line = "<polyline fill=\"none\" stroke=\"#4c72b0\" stroke-width=\"2\" points=\"";
        for (std::size_t i = 0; i < agg.x.size(); ++i) {
            line += svg_number(sx(agg.x[i])) + "," + svg_number(sy(agg.mean[i])) + " ";
        }
        line += "\"/>\n";
        s += line;
    } else {
        s += "<circle cx=\"" + svg_number(sx(agg.x[0])) + "\" cy=\"" + svg_number(sy(agg.mean[0])) +
             "\" r=\"3\" fill=\"#4c72b0\"/>\n";
    }

    s += "<line x1=\"" + svg_number(kL) + "\" y1=\"" + svg_number(kT + plot_h) + "\" x2=\"" +
         svg_number(kL + plot_w) + "\" y2=\"" + svg_number(kT + plot_h) +
         "\" stroke=\"black\"/>\n";
    s += "<line x1=\"" + svg_number(kL) + "\" y1=\"" + svg_number(kT) + "\" x2=\"" +
         svg_number(kL) + "\" y2=\"" + svg_number(kT + plot_h) + "\" stroke=\"black\"/>\n";

    for (int t = 0; t <= 4; ++t) {
        const double fx = x_min + (x_max - x_min) * t / 4.0;
        const double fy = y_min + (y_max - y_min) * t / 4.0;
        s += "<line x1=\"" + svg_number(sx(fx)) + "\" y1=\"" + svg_number(kT + plot_h) + "\" x2=\"" +
             svg_number(sx(fx)) + "\" y2=\"" + svg_number(kT + plot_h + 5) +
             "\" stroke=\"black\"/>\n";
        s += "<text x=\"" + svg_number(sx(fx)) + "\" y=\"" + svg_number(kT + plot_h + 20) +
             "\" text-anchor=\"middle\">" + tick_label(fx) + "</text>\n";
        s += "<line x1=\"" + svg_number(kL - 5) + "\" y1=\"" + svg_number(sy(fy)) + "\" x2=\"" +
             svg_number(kL) + "\" y2=\"" + svg_number(sy(fy)) + "\" stroke=\"black\"/>\n";
        s += "<text x=\"" + svg_number(kL - 9) + "\" y=\"" + svg_number(sy(fy) + 4) +
             "\" text-anchor=\"end\">" + tick_label(fy) + "</text>\n";
    }
    s += "<text x=\"" + svg_number(kL + plot_w / 2) + "\" y=\"" + svg_number(kH - 12) +
         "\" text-anchor=\"middle\">" + x_label + "</text>\n";
    s += "</svg>\n";
    return s;
}

}  // namespace

std::vector<std::filesystem::path> discover_run_dirs(const std::filesystem::path& root) {
    if (!fs::is_directory(root)) {
        throw ConfigError("report: run root " + root.string() + " does not exist");
    }
    std::vector<std::pair<unsigned long long, fs::path>> found;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (!entry.is_directory()) continue;
        const std::string name = entry.path().filename().string();
        if (name.rfind("seed_", 0) != 0) continue;
        const fs::path manifest = entry.path() / "MANIFEST.json";
        if (!fs::exists(manifest)) continue;
        const json m = read_json_file(manifest);
        if (m.value("status", "") != "complete") continue;
        unsigned long long seed = 0;
        try {
            seed = std::stoull(name.substr(5));
        } catch (...) {
            continue;
        }
        found.emplace_back(seed, entry.path());
    }
    std::sort(found.begin(), found.end());
    std::vector<fs::path> dirs;
    dirs.reserve(found.size());
    for (auto& [seed, path] : found) dirs.push_back(std::move(path));
    return dirs;
}

ReportResult write_report(const std::vector<std::filesystem::path>& run_dirs,
                          const std::filesystem::path& out_dir) {
    if (run_dirs.empty()) throw ConfigError("report: no completed run directories");

    // Configs must agree on everything but the seed.
    std::vector<json> configs;
    configs.reserve(run_dirs.size());
    for (const fs::path& dir : run_dirs) {
        json c = read_json_file(dir / "config.json");
        if (c.contains("train") && c["train"].is_object()) c["train"].erase("seed");
        configs.push_back(std::move(c));
    }
    for (std::size_t i = 1; i < configs.size(); ++i) {
        if (configs[i] != configs[0]) {
            throw ConfigError("report: run configs are incompatible between " +
                              run_dirs[0].string() + " and " + run_dirs[i].string() +
                              "; differing keys:\n" + config_diff(configs[0], configs[i]));
        }
    }

    std::vector<RunMetrics> runs;
    runs.reserve(run_dirs.size());
    for (const fs::path& dir : run_dirs) {
        RunMetrics m;
        m.train = read_metrics_train_csv(dir / "metrics_train.csv");
        const fs::path eval_path = dir / "metrics_eval.csv";
        if (fs::exists(eval_path)) m.eval = read_metrics_eval_csv(eval_path);
        runs.push_back(std::move(m));
    }

    struct MetricDef {
        std::string name;
        std::string x_label;
        std::function<Curve(const RunMetrics&)> extract;
    };
    const std::vector<MetricDef> metrics = {
        {"train_accuracy", "epoch",
         [](const RunMetrics& m) { return epoch_accuracy_curve(m.train); }},
        {"mean_response_length", "generation step",
         [](const RunMetrics& m) {
             return step_curve(m.train, [](const MetricsRecord& r) {
                 return std::optional<double>(r.mean_response_length);
             });
         }},
        {"reflection_ratio", "generation step",
         [](const RunMetrics& m) {
             return step_curve(m.train,
                               [](const MetricsRecord& r) { return r.ratios.reflection_ratio; });
         }},
        {"reflection_ratio_in_correct_answers", "generation step",
         [](const RunMetrics& m) {
             return step_curve(m.train, [](const MetricsRecord& r) {
                 return r.ratios.reflection_ratio_in_correct_answers;
             });
         }},
        {"eval_pass8_t1", "epoch",
         [](const RunMetrics& m) { return eval_curve(m.eval, EvalConfigId::Pass8T1); }},
        {"eval_pass1_t06", "epoch",
         [](const RunMetrics& m) { return eval_curve(m.eval, EvalConfigId::Pass1T06); }},
        {"eval_pass1_t001", "epoch",
         [](const RunMetrics& m) { return eval_curve(m.eval, EvalConfigId::Pass1T001); }},
    };

    fs::create_directories(out_dir);
    ReportResult result;
    result.runs = static_cast<int>(run_dirs.size());
    result.aggregate_csv = out_dir / "aggregate.csv";

    std::ofstream agg_out(result.aggregate_csv);
    if (!agg_out) throw ConfigError("report: cannot open " + result.aggregate_csv.string());
    agg_out << "metric,x,mean,std\n";

    for (const MetricDef& def : metrics) {
        std::vector<Curve> curves;
        curves.reserve(runs.size());
        bool usable = true;
        for (const RunMetrics& m : runs) {
            Curve c = def.extract(m);
            if (c.x.empty()) {
                usable = false;
                break;
            }
            curves.push_back(std::move(c));
        }
        if (!usable) continue;

        RunAggregate agg;
        try {
            agg = aggregate_runs(curves);
        } catch (const ConfigError&) {
            continue;  // no common grid for this metric
        }
        for (std::size_t i = 0; i < agg.x.size(); ++i) {
            agg_out << def.name << ',' << format_double(agg.x[i]) << ','
                    << format_double(agg.mean[i]) << ',' << format_double(agg.stddev[i]) << "\n";
        }

        const fs::path svg_path = out_dir / (def.name + ".svg");
        std::ofstream svg_out(svg_path);
        if (!svg_out) throw ConfigError("report: cannot open " + svg_path.string());
        svg_out << render_svg(def.name, def.x_label, agg);
        result.svg_files.push_back(svg_path);
    }
    if (!agg_out) throw ConfigError("report: write failed for " + result.aggregate_csv.string());

    // Accuracy tabs over trained epochs (the epoch-0 baseline is excluded).
    result.tabs_csv = out_dir / "tabs.csv";
    std::ofstream tabs_out(result.tabs_csv);
    if (!tabs_out) throw ConfigError("report: cannot open " + result.tabs_csv.string());
    tabs_out << "metric,mean_of_epoch_means,mean_of_run_maxima\n";

    const auto emit_tabs = [&](const std::string& name,
                               const std::vector<std::vector<double>>& per_run) {
        for (const auto& run : per_run) {
            if (run.empty()) return;
        }
        const AccuracyTabs tabs = accuracy_tabs(per_run);
        tabs_out << name << ',' << format_double(tabs.mean_of_epoch_means) << ','
                 << format_double(tabs.mean_of_run_maxima) << "\n";
    };

    std::vector<std::vector<double>> train_acc;
    for (const RunMetrics& m : runs) train_acc.push_back(epoch_accuracy_curve(m.train).y);
    emit_tabs("train_accuracy", train_acc);

    for (EvalConfigId config : kAllEvalConfigs) {
        std::vector<std::vector<double>> acc;
        for (const RunMetrics& m : runs) {
            std::vector<double> run_acc;
            for (const EvalRecord& r : m.eval) {
                if (r.config == config && r.split == Split::Validation && r.epoch >= 1) {
                    run_acc.push_back(r.accuracy);
                }
            }
            acc.push_back(std::move(run_acc));
        }
        emit_tabs("eval_" + to_string(config), acc);
    }
    if (!tabs_out) throw ConfigError("report: write failed for " + result.tabs_csv.string());

    return result;
}

}  // namespace maye
