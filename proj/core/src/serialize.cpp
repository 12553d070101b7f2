#include "cfl/serialize.hpp"

#include <charconv>
#include <cmath>
#include <memory>
#include <sstream>

#include "cfl/errors.hpp"

namespace cfl {

using nlohmann::json;

json partition_to_json(const Partition& p) {
  return json{{"seed", p.seed}, {"cluster_of_client", p.cluster_of_client}, {"shards", p.client_shards}};
}

Partition partition_from_json(const json& j) {
  try {
    Partition p;
    p.seed = j.at("seed").get<std::uint64_t>();
    p.cluster_of_client = j.at("cluster_of_client").get<std::vector<int>>();
    p.client_shards = j.at("shards").get<std::vector<std::vector<std::size_t>>>();
    if (p.cluster_of_client.size() != p.client_shards.size())
      throw ValidationError("partition JSON: cluster_of_client and shards differ in length");
    return p;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("partition JSON: ") + e.what());
  }
}

json param_vector_to_json(const ParamVector& p) {
  json layout = json::array();
  for (const auto& s : p.layout().segments()) layout.push_back({{"name", s.name}, {"rows", s.rows}, {"cols", s.cols}});
  return json{{"layout", layout}, {"values", std::vector<double>(p.values().begin(), p.values().end())}};
}

ParamVector param_vector_from_json(const json& j) {
  try {
    std::vector<Segment> segs;
    for (const auto& s : j.at("layout"))
      segs.push_back({s.at("name").get<std::string>(), s.at("rows").get<std::size_t>(), s.at("cols").get<std::size_t>()});
    return ParamVector(std::make_shared<const Layout>(std::move(segs)), j.at("values").get<std::vector<double>>());
  } catch (const json::exception& e) {
    throw ValidationError(std::string("parameter JSON: ") + e.what());
  }
}

json assignment_to_json(const Assignment& a) { return json(a.cluster_of); }

json round_record_to_json(const RoundRecord& r) {
  json b = json::array();
  for (const auto& v : r.b_per_cluster) b.push_back(v ? json(*v) : json(nullptr));
  json eta = json::array();
  for (double v : r.eta_bounds) eta.push_back(std::isinf(v) ? json("inf") : json(v));
  json out{{"round", r.round},
           {"f_after_e", r.f_after_e},
           {"f_after_m", r.f_after_m},
           {"f_after_l", r.f_after_l},
           {"r_value", r.r_value},
           {"r_after_m", r.r_after_m},
           {"micro_acc", r.micro_acc},
           {"macro_f1", r.macro_f1},
           {"b_per_cluster", b},
           {"eta_bounds", eta},
           {"assignment_snapshot", assignment_to_json(r.assignment_snapshot)},
           {"ari_vs_truth", r.ari_vs_truth}};
  if (r.grad_sq_mean) out["grad_sq_mean"] = *r.grad_sq_mean;
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string matrix_to_csv(const Matrix& m, const std::string& corner) {
  std::ostringstream out;
  out << corner;
  for (std::size_t c = 0; c < m.cols(); ++c) out << "," << c;
  out << "\n";
  for (std::size_t r = 0; r < m.rows(); ++r) {
    out << r;
    for (std::size_t c = 0; c < m.cols(); ++c) out << "," << format_double(m(r, c));
    out << "\n";
  }
  return out.str();
}

}  // namespace cfl
