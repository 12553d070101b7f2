#pragma once

#include <span>
#include <string>

#include <nlohmann/json.hpp>

#include "cfl/clustering.hpp"
#include "cfl/data.hpp"
#include "cfl/matrix.hpp"
#include "cfl/metrics.hpp"
#include "cfl/param_vector.hpp"

namespace cfl {

// {"seed": u64, "cluster_of_client": [...], "shards": [[...], ...]}
nlohmann::json partition_to_json(const Partition& p);
Partition partition_from_json(const nlohmann::json& j);

// {"layout": [{"name","rows","cols"}...], "values": [...]}
nlohmann::json param_vector_to_json(const ParamVector& p);
ParamVector param_vector_from_json(const nlohmann::json& j);

nlohmann::json assignment_to_json(const Assignment& a);

// One JSON-lines record. Infinite eta bounds are written as the string "inf",
// undefined clusterability values as null.
nlohmann::json round_record_to_json(const RoundRecord& r);

// Square matrix as CSV with a leading index column and header row.
std::string matrix_to_csv(const Matrix& m, const std::string& corner = "id");

// Shortest round-trip decimal form of a double.
std::string format_double(double v);

}  // namespace cfl
