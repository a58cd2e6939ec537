#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "pair_record.hpp"

namespace pcst {

inline nlohmann::json to_json(const PairRecord& r) {
    nlohmann::json j;
    j["input"] = r.input;
    j["targets"] = r.targets;
    j["offset_used"] = {r.offset_used.row, r.offset_used.col};
    if (r.s_yr) j["s_yr"] = *r.s_yr;
    if (r.retained) j["retained"] = *r.retained;
    j["seed_trail"] = r.seed_trail;
    return j;
}

inline PairRecord pair_record_from_json(const nlohmann::json& j) {
    PairRecord r;
    r.input = j.at("input").get<std::string>();
    r.targets = j.at("targets").get<std::vector<std::string>>();
    if (j.contains("offset_used")) {
        const auto& o = j.at("offset_used");
        r.offset_used = Coord{o.at(0).get<int>(), o.at(1).get<int>()};
    }
    if (j.contains("s_yr") && !j.at("s_yr").is_null()) r.s_yr = j.at("s_yr").get<double>();
    if (j.contains("retained") && !j.at("retained").is_null()) r.retained = j.at("retained").get<bool>();
    if (j.contains("seed_trail")) r.seed_trail = j.at("seed_trail").get<std::vector<std::uint64_t>>();
    return r;
}

inline std::string serialize_manifest(const std::vector<PairRecord>& records) {
    std::string out;
    for (const auto& r : records) out += to_json(r).dump() + "\n";
    return out;
}

inline std::vector<PairRecord> parse_manifest(std::istream& in) {
    std::vector<PairRecord> records;
    std::string line;
    std::size_t offset = 0;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") != std::string::npos) {
            try {
                records.push_back(pair_record_from_json(nlohmann::json::parse(line)));
            } catch (const nlohmann::json::exception& e) {
                throw format_error(std::string("manifest: ") + e.what(), offset);
            }
        }
        offset += line.size() + 1;
    }
    return records;
}

inline std::vector<PairRecord> read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open manifest " + path.string());
    return parse_manifest(in);
}

inline void write_manifest(const std::filesystem::path& path, const std::vector<PairRecord>& records) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot write manifest " + path.string());
    out << serialize_manifest(records);
}

} // namespace pcst
