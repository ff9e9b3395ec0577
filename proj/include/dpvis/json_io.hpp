#pragma once

// JSON encodings of every artifact the engine reads or writes. Objects use
// sorted keys and shortest round-trip number formatting, so equal values
// always serialize to identical bytes.

#include <json.hpp>

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dpvis/analytics.hpp"
#include "dpvis/data.hpp"
#include "dpvis/hmm.hpp"
#include "dpvis/layout.hpp"
#include "dpvis/patterns.hpp"
#include "dpvis/query.hpp"
#include "dpvis/subgroups.hpp"

namespace dpvis {

using Json = nlohmann::json;

inline constexpr int kFormatVersion = 1;

std::string canonical(const Json& j);
Json parse_json(const std::string& text);
Json read_json_file(const std::filesystem::path& path);
// Writes a temporary sibling then renames it over `path`.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
void write_json_file(const std::filesystem::path& path, const Json& j);

// Machine-readable form of an exception: {"error": category, "message",
// "location"?}. JSON library failures map to InvalidJson.
Json error_json(const std::exception& e);

Json to_json(const Schema& schema);
Schema schema_from_json(const Json& j);

Json to_json(const Dataset& ds);
Dataset dataset_from_json(const Json& j);
Json to_json(const DatasetSummary& s);

Json to_json(const HmmConfig& cfg);
HmmConfig config_from_json(const Json& j);
Json to_json(const HmmModel& m);
HmmModel model_from_json(const Json& j);

Json to_json(const DecodedSubject& d);
Json to_json(std::span<const DecodedSubject> decoded);
std::vector<DecodedSubject> decoded_from_json(const Json& j);

Json to_json(std::span<const CvRow> rows);

Json to_json(std::span<const MinedPattern> patterns);
std::vector<MinedPattern> patterns_from_json(const Json& j);

Json to_json(const TimeWindow& w);
Json to_json(const SequenceQuery& q);
Json to_json(const FilterExpr& f);
// Shape errors raise InvalidFilterAst with the path of the offending node.
SequenceQuery query_from_json(const Json& j, const std::string& path = "");
FilterExpr filter_from_json(const Json& j, const std::string& path = "");

Json to_json(const Subgroup& g);
Subgroup subgroup_from_json(const Json& j);

Json to_json(const FeatureSummary& f);
Json to_json(const ChordMatrix& c);
Json to_json(const SankeyByVisit& s);
Json to_json(const SankeyByTime& s);
Json to_json(const BipartiteSankey& b);
Json to_json(const KdeCurve& k);
Json to_json(const EventDensity& e);
Json to_json(const WaterfallLayout& w);

}  // namespace dpvis
