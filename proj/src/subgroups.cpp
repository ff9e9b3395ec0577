#include "dpvis/subgroups.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>

#include "dpvis/error.hpp"
#include "dpvis/json_io.hpp"

namespace dpvis {

namespace {

std::string now_iso() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::vector<std::string> sorted_members(const SubjectSet& s) { return {s.begin(), s.end()}; }

Json store_json(const std::vector<Subgroup>& groups, std::uint64_t next_id) {
    Json list = Json::array();
    for (const auto& g : groups) list.push_back(to_json(g));
    return Json{{"format", "dpvis.subgroups"}, {"version", kFormatVersion}, {"next_id", next_id}, {"subgroups", list}};
}

std::vector<Subgroup> groups_from_json(const Json& j) {
    if (!j.is_object() || !j.contains("subgroups") || !j.at("subgroups").is_array())
        throw Error(Errc::InvalidJson, "expected a subgroup file with a 'subgroups' array");
    if (j.contains("format") && j.at("format") != "dpvis.subgroups")
        throw Error(Errc::InvalidJson, "expected format dpvis.subgroups", "/format");
    std::vector<Subgroup> out;
    for (const auto& g : j.at("subgroups")) out.push_back(subgroup_from_json(g));
    return out;
}

}  // namespace

SubgroupStore::SubgroupStore(std::filesystem::path file) : file_(std::move(file)) {
    if (!std::filesystem::exists(file_)) return;
    const Json j = read_json_file(file_);
    groups_ = groups_from_json(j);
    next_id_ = j.value("next_id", std::uint64_t{1});
    for (const auto& g : groups_) next_id_ = std::max(next_id_, g.id + 1);
}

Subgroup SubgroupStore::create(std::string name, FilterExpr filter, const FilterEvaluator& eval) {
    Subgroup g;
    g.name = std::move(name);
    g.members = sorted_members(eval(filter));
    g.filter = std::move(filter);
    g.created_at = now_iso();
    std::unique_lock lock(mutex_);
    g.id = next_id_++;
    groups_.push_back(g);
    persist_locked();
    return g;
}

Subgroup SubgroupStore::rename(std::uint64_t id, std::string name) {
    std::unique_lock lock(mutex_);
    Subgroup& g = find_locked(id);
    g.name = std::move(name);
    persist_locked();
    return g;
}

void SubgroupStore::remove(std::uint64_t id) {
    std::unique_lock lock(mutex_);
    find_locked(id);
    std::erase_if(groups_, [id](const Subgroup& g) { return g.id == id; });
    persist_locked();
}

Subgroup SubgroupStore::get(std::uint64_t id) const {
    std::shared_lock lock(mutex_);
    for (const auto& g : groups_)
        if (g.id == id) return g;
    throw Error(Errc::UnknownSubgroup, "no subgroup with id " + std::to_string(id));
}

std::vector<Subgroup> SubgroupStore::list() const {
    std::shared_lock lock(mutex_);
    return groups_;
}

void SubgroupStore::refresh(const FilterEvaluator& eval) {
    std::unique_lock lock(mutex_);
    auto updated = groups_;
    for (auto& g : updated) g.members = sorted_members(eval(g.filter));
    groups_ = std::move(updated);
    persist_locked();
}

std::vector<Subgroup> SubgroupStore::import_from_static(const Dataset& ds, const std::string& var,
                                                        const FilterEvaluator& eval) {
    const Variable* v = ds.find_variable(var);
    if (!v || v->role != VarRole::Static) throw Error(Errc::UnknownVariable, "'" + var + "' is not a static variable");
    std::set<std::string> values;
    for (const auto& s : ds.subjects) {
        auto it = s.statics.find(var);
        if (it != s.statics.end() && it->second) values.insert(*it->second);
    }
    std::vector<Subgroup> out;
    for (const auto& value : values) out.push_back(create(var + "=" + value, FilterExpr{StaticEquals{var, value}}, eval));
    return out;
}

std::string SubgroupStore::export_text() const {
    std::shared_lock lock(mutex_);
    return canonical(store_json(groups_, next_id_));
}

std::vector<Subgroup> SubgroupStore::import_text(const std::string& text) {
    auto incoming = groups_from_json(parse_json(text));
    std::unique_lock lock(mutex_);
    for (auto& g : incoming) {
        g.id = next_id_++;
        groups_.push_back(g);
    }
    persist_locked();
    return incoming;
}

void SubgroupStore::export_file(const std::filesystem::path& path) const { write_text_atomic(path, export_text()); }

std::vector<Subgroup> SubgroupStore::import_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::Io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return import_text(ss.str());
}

void SubgroupStore::persist_locked() const {
    if (file_.empty()) return;
    write_json_file(file_, store_json(groups_, next_id_));
}

Subgroup& SubgroupStore::find_locked(std::uint64_t id) {
    for (auto& g : groups_)
        if (g.id == id) return g;
    throw Error(Errc::UnknownSubgroup, "no subgroup with id " + std::to_string(id));
}

}  // namespace dpvis
