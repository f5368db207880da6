#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "homelist/homelist.hpp"

namespace testutil {

using namespace homelist;

inline Ad make_ad(std::string id, std::string agency, double lat, double lon, double price,
                  Date created = make_date(2016, 1, 4), std::string zone = "C0/Z0") {
  Ad a;
  a.id = std::move(id);
  a.agency_id = std::move(agency);
  a.zone_id = std::move(zone);
  a.location = {lat, lon};
  a.asking_price = price;
  a.created_on = created;
  a.traits.floor_area = 80.0;
  a.traits.rooms = 3;
  a.traits.bathrooms = 1;
  a.traits.floor = 2;
  a.description = "bright apartment close to the station";
  return a;
}

inline GeneratorConfig small_config() {
  GeneratorConfig g;
  g.cities = 2;
  g.city_size = {1.0, 1.0};
  g.stock_per_city = 250;
  g.weeks = 8;
  return g;
}

/// Model pair trained once on a small synthetic stream.
inline const TrainedModelPair& small_model() {
  static const TrainedModelPair m = [] {
    HashedTokenEmbedding emb;
    const auto samples = training_pairs(generate(small_config(), 101), emb);
    return train_model_pair(samples);
  }();
  return m;
}

/// Fresh temporary directory removed on destruction.
struct TempDir {
  std::filesystem::path path;
  TempDir() {
    static std::mt19937_64 rng(std::random_device{}());
    path = std::filesystem::temp_directory_path() / ("homelist-test-" + std::to_string(rng()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

}  // namespace testutil
