#pragma once

#include <filesystem>
#include <string>

#include "cids/json_io.hpp"
#include "cids/logparse.hpp"
#include "cids/synthgen.hpp"

namespace cids {

struct ScenarioPaths {
    std::string packets, windows_log, linux_log, inventory, labels;
};

inline ScenarioPaths scenario_paths(const std::string& dir) {
    namespace fs = std::filesystem;
    return ScenarioPaths{(fs::path(dir) / "packets.jsonl").string(),
                         (fs::path(dir) / "windows_events.csv").string(),
                         (fs::path(dir) / "linux_syslog.log").string(),
                         (fs::path(dir) / "inventory.json").string(),
                         (fs::path(dir) / "labels.jsonl").string()};
}

inline ScenarioPaths write_scenario(const Scenario& sc, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const auto paths = scenario_paths(dir);

    auto packets = open_output(paths.packets);
    for (const auto& p : sc.packets) packets << packet_to_json(p).dump() << '\n';

    auto windows = open_output(paths.windows_log);
    windows << "EventId,Version,ProviderName,Level,Task,Opcode,Keywords,TimeCreated,MachineName,Message\n";
    for (const auto& row : sc.windows_csv) windows << row << '\n';

    auto linux_log = open_output(paths.linux_log);
    for (const auto& line : sc.linux_log) linux_log << line << '\n';

    json inv;
    for (const auto& [name, ip] : sc.inventory.by_name) inv[name] = format_ipv4(ip);
    auto inventory = open_output(paths.inventory);
    inventory << inv.dump(2) << '\n';

    auto labels = open_output(paths.labels);
    for (const auto& l : sc.labels) labels << flow_label_to_json(l).dump() << '\n';
    return paths;
}

inline HostInventory read_inventory(const std::string& path) {
    auto in = open_input(path);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw InputError("inventory file is not a JSON object: " + path);
    HostInventory inv;
    for (const auto& [name, ip] : j.items()) inv.by_name[name] = parse_ipv4(ip.get<std::string>());
    return inv;
}

} // namespace cids
