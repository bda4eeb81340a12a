#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cids/align.hpp"
#include "cids/config.hpp"
#include "cids/flowmeter.hpp"
#include "cids/json_io.hpp"
#include "cids/logparse.hpp"
#include "cids/manifest.hpp"
#include "cids/model_io.hpp"
#include "cids/scenario_io.hpp"
#include "cids/synthgen.hpp"
#include "cids/trainer.hpp"

namespace fs = std::filesystem;
using namespace cids;

namespace {

struct CommonOpts {
    int threads = 1;
};

PipelineConfig load_or_default(const std::string& config_path) {
    return config_path.empty() ? PipelineConfig{} : PipelineConfig::load(config_path);
}

// ---------------------------------------------------------------------------

int cmd_synth(const CommonOpts& common, const std::string& out_dir, uint64_t seed,
              size_t flows_per_class) {
    StageTimer timer;
    auto spec = default_spec();
    spec.flows_per_class = flows_per_class;
    const auto scenario = generate(spec, seed);
    write_scenario(scenario, out_dir);

    RunManifest manifest("synth", {{"seed", seed}, {"flows_per_class", flows_per_class}});
    manifest.set_threads(common.threads);
    manifest.add_timing("synth", timer.seconds());
    manifest.save((fs::path(out_dir) / "manifest.json").string());
    std::cerr << "wrote " << scenario.packets.size() << " packets, "
              << scenario.windows_csv.size() + scenario.linux_log.size() << " log lines, "
              << scenario.labels.size() << " labels to " << out_dir << "\n";
    return 0;
}

int cmd_flows(const CommonOpts& common, const std::string& packets_path, double window,
              const std::string& out_path) {
    StageTimer timer;
    auto in = open_input(packets_path);
    const auto packets = read_packets(in);
    const auto windowed = aggregate_flows(packets, window);
    std::vector<FlowRecord> records;
    records.reserve(windowed.size());
    for (const auto& flow : windowed) records.push_back(make_flow_record(flow, window));
    auto out = open_output(out_path);
    write_flows(out, records);

    RunManifest manifest("flows", {{"window", window}});
    manifest.set_threads(common.threads);
    manifest.add_input(packets_path);
    manifest.add_timing("flows", timer.seconds());
    manifest.save(out_path + ".manifest.json");
    std::cerr << "aggregated " << packets.size() << " packets into " << records.size()
              << " flows\n";
    return 0;
}

int cmd_parse_logs(const CommonOpts& common, const std::vector<std::string>& windows_files,
                   const std::vector<std::string>& linux_files, const std::string& inventory_path,
                   int64_t year, const std::string& out_path) {
    StageTimer timer;
    const auto inventory = read_inventory(inventory_path);
    std::vector<HostEvent> events;
    ParseStats stats;
    for (const auto& path : windows_files) {
        auto in = open_input(path);
        auto parsed = parse_windows_csv(in, inventory, stats);
        events.insert(events.end(), parsed.begin(), parsed.end());
    }
    for (const auto& path : linux_files) {
        auto in = open_input(path);
        auto parsed = parse_syslog(in, year, inventory, stats);
        events.insert(events.end(), parsed.begin(), parsed.end());
    }
    std::stable_sort(events.begin(), events.end(),
                     [](const HostEvent& a, const HostEvent& b) { return a.ts < b.ts; });
    auto out = open_output(out_path);
    write_host_events(out, events);

    RunManifest manifest("parse-logs", {{"year", year}});
    manifest.set_threads(common.threads);
    for (const auto& path : windows_files) manifest.add_input(path);
    for (const auto& path : linux_files) manifest.add_input(path);
    manifest.add_input(inventory_path);
    manifest.add_timing("parse-logs", timer.seconds());
    manifest.save(out_path + ".manifest.json");

    std::cerr << "accepted " << stats.accepted << " events, rejected " << stats.rejected << "\n";
    if (stats.accepted == 0) std::cerr << "warning: no events were accepted\n";
    for (size_t i = 0; i < stats.errors.size() && i < 10; ++i)
        std::cerr << "  " << stats.errors[i] << "\n";
    return 0;
}

int cmd_align(const CommonOpts& common, const std::string& flows_path,
              const std::string& events_path, const std::string& labels_path,
              const std::string& config_path, const std::string& out_path,
              const std::string& unlabeled_policy, bool check_oracle) {
    StageTimer timer;
    const auto config = load_or_default(config_path);
    auto flows_in = open_input(flows_path);
    auto flows = read_flows(flows_in);
    auto events_in = open_input(events_path);
    const auto events = read_host_events(events_in);
    auto labels_in = open_input(labels_path);
    const auto labels = read_flow_labels(labels_in);

    std::map<std::pair<double, SessionKey>, std::string> label_map;
    for (const auto& l : labels) {
        const auto key = std::make_pair(l.window_start, l.key);
        const auto it = label_map.find(key);
        if (it != label_map.end() && it->second != l.class_name)
            throw InputError("conflicting labels for one (key, window): '" + it->second + "' vs '" +
                             l.class_name + "'");
        label_map.emplace(key, l.class_name);
    }

    std::vector<FlowRecord> labeled;
    size_t unlabeled = 0;
    for (auto& flow : flows) {
        const auto it = label_map.find({flow.window_start, flow.key});
        if (it == label_map.end()) {
            if (unlabeled_policy == "error")
                throw InputError("flow at window_start " + std::to_string(flow.window_start) +
                                 " has no label");
            ++unlabeled;
            continue;
        }
        flow.label = it->second;
        labeled.push_back(std::move(flow));
    }

    const auto samples = align(labeled, EventIndex::build(events), config.align);
    if (check_oracle) {
        const auto reference = align_bruteforce(labeled, events, config.align);
        if (samples != reference)
            throw NumericError("alignment disagrees with the brute-force oracle");
        std::cerr << "oracle check passed on " << samples.size() << " samples\n";
    }
    auto out = open_output(out_path);
    write_cids_samples(out, samples);

    RunManifest manifest("align", config.to_json());
    manifest.set_threads(common.threads);
    manifest.add_input(flows_path);
    manifest.add_input(events_path);
    manifest.add_input(labels_path);
    if (!config_path.empty()) manifest.add_input(config_path);
    manifest.add_timing("align", timer.seconds());
    manifest.save(out_path + ".manifest.json");

    std::cerr << "aligned " << samples.size() << " samples (" << unlabeled
              << " unlabeled flows dropped)\n";
    return 0;
}

int cmd_train(const CommonOpts& common, const std::string& samples_path,
              const std::string& config_path, const std::string& out_dir) {
    StageTimer timer;
    const auto config = load_or_default(config_path);
    auto in = open_input(samples_path);
    const auto samples = read_cids_samples(in);
    if (samples.empty()) throw InputError("no samples in " + samples_path);

    const auto prepared = prepare_dataset(samples, config.train);
    for (const auto& [name, count] : prepared.dropped_classes)
        std::cerr << "dropped rare class '" << name << "' (" << count << " samples)\n";
    std::cerr << "train/test split: " << prepared.train.size() << "/" << prepared.test.size()
              << " over " << prepared.taxonomy.size() << " classes\n";

    const auto table =
        EmbeddingTable::generate(config.embed.vocab_buckets, config.embed.dim, config.embed.seed);
    const double prep_seconds = timer.seconds();
    StageTimer train_timer;
    const auto model = train(prepared.train, config.model, config.train, table, prepared.taxonomy);
    save_trained_model(model, table, config.train, out_dir);

    nlohmann::json history;
    history["epoch_losses"] = model.epoch_losses;
    std::ofstream hist_out(fs::path(out_dir) / "history.json");
    hist_out << history.dump(2) << '\n';

    RunManifest manifest("train", config.to_json());
    manifest.set_threads(common.threads);
    manifest.add_input(samples_path);
    if (!config_path.empty()) manifest.add_input(config_path);
    manifest.add_timing("prepare", prep_seconds);
    manifest.add_timing("train", train_timer.seconds());
    manifest.save((fs::path(out_dir) / "manifest.json").string());

    if (!model.epoch_losses.empty())
        std::cerr << "final train loss " << model.epoch_losses.back() << " after "
                  << model.epoch_losses.size() << " epochs\n";
    return 0;
}

int cmd_eval(const CommonOpts& common, const std::string& samples_path,
             const std::string& model_path, const std::string& out_path, bool network_only,
             const std::string& split) {
    StageTimer timer;
    auto loaded = load_trained_model(model_path);
    auto in = open_input(samples_path);
    const auto samples = read_cids_samples(in);
    const auto prepared = prepare_dataset(samples, loaded.train_cfg);

    const std::vector<CidsSample>* eval_set = &prepared.test;
    std::vector<CidsSample> all;
    if (split == "train") {
        eval_set = &prepared.train;
    } else if (split == "all") {
        all = prepared.train;
        all.insert(all.end(), prepared.test.begin(), prepared.test.end());
        eval_set = &all;
    }

    const auto report = network_only ? evaluate_network_only(loaded.model, *eval_set, loaded.table)
                                     : evaluate(loaded.model, *eval_set, loaded.table);
    auto out = open_output(out_path);
    out << report.to_json().dump(2) << '\n';

    RunManifest manifest("eval", {{"network_only", network_only}, {"split", split}});
    manifest.set_threads(common.threads);
    manifest.add_input(samples_path);
    manifest.add_input(model_path);
    manifest.add_timing("eval", timer.seconds());
    manifest.save(out_path + ".manifest.json");

    std::cerr << "macro f1 " << report.macro_f1 << ", weighted f1 " << report.weighted_f1 << " on "
              << report.total << " samples\n";
    return 0;
}

int cmd_report(const std::string& metrics_path, const std::string& out_path,
               const std::string& csv_path) {
    auto in = open_input(metrics_path);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw InputError("metrics file is not valid JSON: " + metrics_path);
    const auto report = MetricsReport::from_json(j);
    auto out = open_output(out_path);
    out << report.to_text();
    if (!csv_path.empty()) {
        auto csv = open_output(csv_path);
        csv << report.to_csv();
    }
    std::cerr << "report written to " << out_path << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"combined network/host intrusion detection pipeline"};
    app.require_subcommand(1);
    CommonOpts common;
    app.add_option("--threads", common.threads, "worker thread count recorded in manifests")
        ->default_val(1);

    auto* synth = app.add_subcommand("synth", "generate the bundled synthetic scenario");
    std::string synth_out;
    uint64_t synth_seed = 7;
    size_t synth_flows = 300;
    synth->add_option("--out-dir", synth_out, "output directory")->required();
    synth->add_option("--seed", synth_seed, "generator seed");
    synth->add_option("--flows-per-class", synth_flows, "flows per class");

    auto* flows = app.add_subcommand("flows", "aggregate packet records into flow features");
    std::string flows_packets, flows_out;
    double flows_window = 120.0;
    flows->add_option("--packets", flows_packets, "packet records (jsonl)")->required();
    flows->add_option("--window", flows_window, "window length in seconds");
    flows->add_option("--out", flows_out, "flow records output (jsonl)")->required();

    auto* logs = app.add_subcommand("parse-logs", "parse host logs into events");
    std::vector<std::string> logs_windows, logs_linux;
    std::string logs_inventory, logs_out;
    int64_t logs_year = 2018;
    logs->add_option("--windows", logs_windows, "Windows CSV exports");
    logs->add_option("--linux", logs_linux, "Linux syslog files");
    logs->add_option("--inventory", logs_inventory, "hostname -> IPv4 JSON map")->required();
    logs->add_option("--year", logs_year, "year for syslog timestamps");
    logs->add_option("--out", logs_out, "host events output (jsonl)")->required();

    auto* align_cmd = app.add_subcommand("align", "join flows with host events into samples");
    std::string align_flows, align_events, align_labels, align_config, align_out;
    std::string align_unlabeled = "drop";
    bool align_oracle = false;
    align_cmd->add_option("--flows", align_flows, "flow records (jsonl)")->required();
    align_cmd->add_option("--events", align_events, "host events (jsonl)")->required();
    align_cmd->add_option("--labels", align_labels, "flow labels (jsonl)")->required();
    align_cmd->add_option("--config", align_config, "pipeline config (json)");
    align_cmd->add_option("--out", align_out, "aligned samples output (jsonl)")->required();
    align_cmd->add_option("--unlabeled", align_unlabeled, "unlabeled flow policy: drop|error")
        ->check(CLI::IsMember({"drop", "error"}));
    align_cmd->add_flag("--check-oracle", align_oracle,
                        "re-run the brute-force reference and compare");

    auto* train_cmd = app.add_subcommand("train", "train the model on aligned samples");
    std::string train_samples, train_config, train_out;
    train_cmd->add_option("--samples", train_samples, "aligned samples (jsonl)")->required();
    train_cmd->add_option("--config", train_config, "pipeline config (json)");
    train_cmd->add_option("--out-dir", train_out, "model output directory")->required();

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a trained model");
    std::string eval_samples, eval_model, eval_out, eval_split = "test";
    bool eval_network_only = false;
    eval_cmd->add_option("--samples", eval_samples, "aligned samples (jsonl)")->required();
    eval_cmd->add_option("--model", eval_model, "model manifest (model.json)")->required();
    eval_cmd->add_option("--out", eval_out, "metrics output (json)")->required();
    eval_cmd->add_flag("--network-only", eval_network_only,
                       "evaluate the network encoder head alone");
    eval_cmd->add_option("--split", eval_split, "evaluation split: test|train|all")
        ->check(CLI::IsMember({"test", "train", "all"}));

    auto* report_cmd = app.add_subcommand("report", "render a metrics file as a table");
    std::string report_metrics, report_out, report_csv;
    report_cmd->add_option("--metrics", report_metrics, "metrics (json)")->required();
    report_cmd->add_option("--out", report_out, "text table output")->required();
    report_cmd->add_option("--csv", report_csv, "CSV output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*synth) return cmd_synth(common, synth_out, synth_seed, synth_flows);
        if (*flows) return cmd_flows(common, flows_packets, flows_window, flows_out);
        if (*logs)
            return cmd_parse_logs(common, logs_windows, logs_linux, logs_inventory, logs_year,
                                  logs_out);
        if (*align_cmd)
            return cmd_align(common, align_flows, align_events, align_labels, align_config,
                             align_out, align_unlabeled, align_oracle);
        if (*train_cmd) return cmd_train(common, train_samples, train_config, train_out);
        if (*eval_cmd)
            return cmd_eval(common, eval_samples, eval_model, eval_out, eval_network_only,
                            eval_split);
        if (*report_cmd) return cmd_report(report_metrics, report_out, report_csv);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
