#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "dpvis/data.hpp"
#include "dpvis/query.hpp"

namespace dpvis {

struct Subgroup {
    std::uint64_t id = 0;
    std::string name;
    FilterExpr filter;
    std::vector<std::string> members;  // sorted subject ids
    std::string created_at;            // ISO 8601, UTC

    bool operator==(const Subgroup&) const = default;
};

using FilterEvaluator = std::function<SubjectSet(const FilterExpr&)>;

// Named, persisted cohorts. With a backing file every mutation is written
// through atomically (temporary file, then rename). Readers get copies, so
// they always observe a consistent snapshot.
class SubgroupStore {
public:
    SubgroupStore() = default;
    // Loads the file when it exists.
    explicit SubgroupStore(std::filesystem::path file);

    Subgroup create(std::string name, FilterExpr filter, const FilterEvaluator& eval);
    Subgroup rename(std::uint64_t id, std::string name);
    void remove(std::uint64_t id);
    Subgroup get(std::uint64_t id) const;
    std::vector<Subgroup> list() const;

    // Recomputes every member set from its stored filter.
    void refresh(const FilterEvaluator& eval);

    // One subgroup per distinct non-missing value of a static variable.
    std::vector<Subgroup> import_from_static(const Dataset& ds, const std::string& var, const FilterEvaluator& eval);

    std::string export_text() const;
    // Appends the file's subgroups under fresh ids; names may repeat.
    std::vector<Subgroup> import_text(const std::string& text);

    void export_file(const std::filesystem::path& path) const;
    std::vector<Subgroup> import_file(const std::filesystem::path& path);

private:
    void persist_locked() const;
    Subgroup& find_locked(std::uint64_t id);

    mutable std::shared_mutex mutex_;
    std::vector<Subgroup> groups_;
    std::uint64_t next_id_ = 1;
    std::filesystem::path file_;
};

}  // namespace dpvis
