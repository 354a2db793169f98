#include "aqi/dataset.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "aqi/csv.hpp"
#include "aqi/error.hpp"

namespace aqi {
namespace fs = std::filesystem;

GridGraph DatasetBundle::grid() const { return build_grid_graph(bbox, cell_size_m); }

std::vector<HourStamp> DatasetBundle::timestamps() const {
  auto start = HourStamp::parse(start_time);
  std::vector<HourStamp> out;
  out.reserve(static_cast<std::size_t>(hours));
  for (int t = 0; t < hours; ++t) out.push_back(start.plus_hours(t));
  return out;
}

void write_bundle(const fs::path& dir, const DatasetBundle& b) {
  fs::create_directories(dir);
  nlohmann::json meta;
  meta["start_time"] = b.start_time;
  meta["hours"] = b.hours;
  meta["cell_size_m"] = b.cell_size_m;
  meta["bbox_deg"] = {{"lat_min", rad_to_deg(b.bbox.lat_min)},
                      {"lat_max", rad_to_deg(b.bbox.lat_max)},
                      {"lon_min", rad_to_deg(b.bbox.lon_min)},
                      {"lon_max", rad_to_deg(b.bbox.lon_max)}};
  // Radians are stored too, so the mesh rebuilds bit-for-bit.
  meta["bbox_rad"] = {b.bbox.lat_min, b.bbox.lat_max, b.bbox.lon_min, b.bbox.lon_max};
  std::vector<std::string> pollutants;
  for (const auto& [p, _] : b.readings) pollutants.push_back(to_string(p));
  meta["pollutants"] = pollutants;
  write_file_atomic(dir / "dataset.json", meta.dump(2) + "\n");

  write_stations(dir / "stations.csv", b.stations);

  for (const auto& [p, series] : b.readings) {
    CsvWriter w({"station_id", "t", "value"});
    for (const auto& [id, values] : series) {
      for (std::size_t t = 0; t < values.size(); ++t) {
        if (std::isnan(values[t])) continue;
        w.row(id, static_cast<int>(t), values[t]);
      }
    }
    write_file_atomic(dir / ("readings_" + to_string(p) + ".csv"), w.str());
  }

  {
    CsvWriter w({"truck_id", "t", "lat_deg", "lon_deg"});
    for (const auto& pt : b.trajectories) w.row(pt.truck_id, pt.t, rad_to_deg(pt.pos.lat), rad_to_deg(pt.pos.lon));
    write_file_atomic(dir / "trajectories.csv", w.str());
  }
  {
    CsvWriter roads({"road_id", "grid_id", "length_km"});
    CsvWriter cong({"road_id", "t", "index"});
    std::set<std::string> written;
    for (const auto& s : b.roads) {
      roads.row(s.road_id, s.grid_id, s.length_km);
      if (written.insert(s.road_id).second) {
        for (std::size_t t = 0; t < s.congestion.size(); ++t) cong.row(s.road_id, static_cast<int>(t), s.congestion[t]);
      }
    }
    write_file_atomic(dir / "roads.csv", roads.str());
    write_file_atomic(dir / "congestion.csv", cong.str());
  }
  {
    std::vector<std::string> header{"grid_id"};
    header.insert(header.end(), b.geo_names.begin(), b.geo_names.end());
    std::ostringstream out;
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << '\n';
    for (Eigen::Index g = 0; g < b.geographic.rows(); ++g) {
      out << g;
      for (Eigen::Index c = 0; c < b.geographic.cols(); ++c) out << ',' << format_double(b.geographic(g, c));
      out << '\n';
    }
    write_file_atomic(dir / "geographic.csv", out.str());
  }
  {
    std::ostringstream out;
    out << 't';
    for (const auto& n : b.weather_names) out << ',' << n;
    out << '\n';
    for (Eigen::Index t = 0; t < b.weather.rows(); ++t) {
      out << t;
      for (Eigen::Index c = 0; c < b.weather.cols(); ++c) out << ',' << format_double(b.weather(t, c));
      out << '\n';
    }
    write_file_atomic(dir / "weather.csv", out.str());
  }
  for (const auto& [p, field] : b.truth) {
    CsvWriter w({"grid_id", "t", "value"});
    for (Eigen::Index g = 0; g < field.rows(); ++g) {
      for (Eigen::Index t = 0; t < field.cols(); ++t) w.row(static_cast<int>(g), static_cast<int>(t), field(g, t));
    }
    write_file_atomic(dir / ("truth_" + to_string(p) + ".csv"), w.str());
  }
}

DatasetBundle read_bundle(const fs::path& dir) {
  if (!fs::exists(dir / "dataset.json")) {
    fail(ErrorCode::kMissingArtifact, "dataset directory '" + dir.string() + "' has no dataset.json");
  }
  DatasetBundle b;
  nlohmann::json meta;
  {
    std::ifstream in(dir / "dataset.json");
    meta = nlohmann::json::parse(in);
  }
  b.start_time = meta.at("start_time").get<std::string>();
  b.hours = meta.at("hours").get<int>();
  b.cell_size_m = meta.at("cell_size_m").get<double>();
  if (meta.contains("bbox_rad")) {
    auto r = meta["bbox_rad"].get<std::vector<double>>();
    b.bbox = {r.at(0), r.at(1), r.at(2), r.at(3)};
  } else {
    const auto& d = meta.at("bbox_deg");
    b.bbox = {deg_to_rad(d.at("lat_min").get<double>()), deg_to_rad(d.at("lat_max").get<double>()),
              deg_to_rad(d.at("lon_min").get<double>()), deg_to_rad(d.at("lon_max").get<double>())};
  }
  b.stations = read_stations(dir / "stations.csv");
  const auto grid = b.grid();
  const int n = grid.size();

  for (const auto& name : meta.at("pollutants").get<std::vector<std::string>>()) {
    const Pollutant p = parse_pollutant(name);
    auto table = read_csv(dir / ("readings_" + name + ".csv"));
    auto c_id = table.column("station_id");
    auto c_t = table.column("t");
    auto c_v = table.column("value");
    auto& series = b.readings[p];
    for (const auto& st : b.stations) series[st.id].assign(b.hours, std::numeric_limits<double>::quiet_NaN());
    for (const auto& row : table.rows) {
      auto it = series.find(row[c_id]);
      if (it == series.end()) fail(ErrorCode::kInvalidInput, "reading for unknown station '" + row[c_id] + "'");
      long long t = parse_int(row[c_t]);
      if (t < 0 || t >= b.hours) fail(ErrorCode::kInvalidInput, "reading hour out of range");
      it->second[static_cast<std::size_t>(t)] = parse_double(row[c_v]);
    }
  }

  if (fs::exists(dir / "trajectories.csv")) {
    auto table = read_csv(dir / "trajectories.csv");
    auto c_id = table.column("truck_id");
    auto c_t = table.column("t");
    auto c_lat = table.column("lat_deg");
    auto c_lon = table.column("lon_deg");
    for (const auto& row : table.rows) {
      b.trajectories.push_back({row[c_id], static_cast<int>(parse_int(row[c_t])),
                                {deg_to_rad(parse_double(row[c_lat])), deg_to_rad(parse_double(row[c_lon]))}});
    }
  }

  if (fs::exists(dir / "roads.csv")) {
    std::map<std::string, std::vector<double>> congestion;
    auto ctab = read_csv(dir / "congestion.csv");
    auto c_road = ctab.column("road_id");
    auto c_t = ctab.column("t");
    auto c_idx = ctab.column("index");
    for (const auto& row : ctab.rows) {
      auto& s = congestion[row[c_road]];
      if (s.empty()) s.assign(b.hours, 0.0);
      long long t = parse_int(row[c_t]);
      if (t >= 0 && t < b.hours) s[static_cast<std::size_t>(t)] = parse_double(row[c_idx]);
    }
    auto rtab = read_csv(dir / "roads.csv");
    auto r_id = rtab.column("road_id");
    auto r_grid = rtab.column("grid_id");
    auto r_len = rtab.column("length_km");
    for (const auto& row : rtab.rows) {
      RoadSegment s;
      s.road_id = row[r_id];
      s.grid_id = static_cast<int>(parse_int(row[r_grid]));
      s.length_km = parse_double(row[r_len]);
      auto it = congestion.find(s.road_id);
      s.congestion = it != congestion.end() ? it->second : std::vector<double>(b.hours, 0.0);
      b.roads.push_back(std::move(s));
    }
  }

  {
    auto table = read_csv(dir / "geographic.csv");
    auto c_grid = table.column("grid_id");
    for (std::size_t c = 0; c < table.header.size(); ++c) {
      if (c != c_grid) b.geo_names.push_back(table.header[c]);
    }
    b.geographic = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(b.geo_names.size()));
    for (const auto& row : table.rows) {
      long long g = parse_int(row[c_grid]);
      if (g < 0 || g >= n) fail(ErrorCode::kInvalidInput, "geographic row for unknown grid");
      Eigen::Index k = 0;
      for (std::size_t c = 0; c < row.size(); ++c) {
        if (c != c_grid) b.geographic(g, k++) = parse_double(row[c]);
      }
    }
  }
  {
    auto table = read_csv(dir / "weather.csv");
    auto c_t = table.column("t");
    for (std::size_t c = 0; c < table.header.size(); ++c) {
      if (c != c_t) b.weather_names.push_back(table.header[c]);
    }
    b.weather = Eigen::MatrixXd::Zero(b.hours, static_cast<Eigen::Index>(b.weather_names.size()));
    for (const auto& row : table.rows) {
      long long t = parse_int(row[c_t]);
      if (t < 0 || t >= b.hours) continue;
      Eigen::Index k = 0;
      for (std::size_t c = 0; c < row.size(); ++c) {
        if (c != c_t) b.weather(t, k++) = parse_double(row[c]);
      }
    }
  }
  for (Pollutant p : kAllPollutants) {
    auto path = dir / ("truth_" + to_string(p) + ".csv");
    if (!fs::exists(path)) continue;
    auto table = read_csv(path);
    auto c_g = table.column("grid_id");
    auto c_t = table.column("t");
    auto c_v = table.column("value");
    Eigen::MatrixXd field = Eigen::MatrixXd::Zero(n, b.hours);
    for (const auto& row : table.rows) field(parse_int(row[c_g]), parse_int(row[c_t])) = parse_double(row[c_v]);
    b.truth[p] = std::move(field);
  }
  return b;
}

}  // namespace aqi
