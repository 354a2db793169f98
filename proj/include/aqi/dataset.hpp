#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "aqi/featurize.hpp"
#include "aqi/grid.hpp"

namespace aqi {

// A raw GPS fix of a construction-waste truck.
struct RawTrajectoryPoint {
  std::string truck_id;
  int t = 0;
  LatLon pos;
};

using StationSeries = std::map<std::string, std::vector<double>>;  // station id -> hourly values (NaN = missing)

// Everything a study area provides before featurization. This is the
// in-memory form of a dataset directory (see read_bundle / write_bundle).
struct DatasetBundle {
  BoundingBox bbox;
  double cell_size_m = 500.0;
  std::string start_time = "2022-03-01T00:00";
  int hours = 0;

  std::vector<Station> stations;
  std::map<Pollutant, StationSeries> readings;
  std::vector<RawTrajectoryPoint> trajectories;
  std::vector<RoadSegment> roads;
  std::vector<std::string> geo_names;
  Eigen::MatrixXd geographic;  // [grids x columns], by grid id
  std::vector<std::string> weather_names;
  Eigen::MatrixXd weather;     // [hours x factors]
  std::map<Pollutant, Eigen::MatrixXd> truth;  // optional [grids x hours]

  GridGraph grid() const;
  std::vector<HourStamp> timestamps() const;
};

// Directory layout:
//   dataset.json            start_time, hours, bbox (degrees), cell_size_m
//   stations.csv            id,kind,lat_deg,lon_deg
//   readings_<P>.csv        station_id,t,value
//   trajectories.csv        truck_id,t,lat_deg,lon_deg
//   roads.csv               road_id,grid_id,length_km
//   congestion.csv          road_id,t,index
//   geographic.csv          grid_id,<feature columns>
//   weather.csv             t,<meteorological columns>
//   truth_<P>.csv           grid_id,t,value (synthetic data only)
void write_bundle(const std::filesystem::path& dir, const DatasetBundle& bundle);
DatasetBundle read_bundle(const std::filesystem::path& dir);

}  // namespace aqi
