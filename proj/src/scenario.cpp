#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "stm/sim.hpp"

namespace stm {

namespace {

using nlohmann::json;

// Procedural-clutter request; the outermost scenario file wins.
struct RandomizeSpec {
  bool present = false;
  int cones[2] = {0, 0}, signs[2] = {0, 0}, barrels[2] = {0, 0}, boxes[2] = {0, 0};
  double x[2] = {10, 80}, y[2] = {-10, 10};
  double corridor = 2.0;  // keep |y| of placed objects at least this far out
};

Vec3 parse_vec3(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3)
    throw std::invalid_argument(std::string("scenario: ") + what + " must be [x, y, z]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

uint8_t parse_class(const json& j) {
  if (j.is_number_integer()) return (uint8_t)j.get<int>();
  const std::string s = j.get<std::string>();
  if (s == "background") return kBackground;
  if (s == "traffic_sign") return kTrafficSign;
  if (s == "construction") return kConstruction;
  throw std::invalid_argument("scenario: unknown class name '" + s + "'");
}

int parse_axis(const json& j) {
  if (j.is_number_integer()) {
    const int a = j.get<int>();
    if (a < 0 || a > 2) throw std::invalid_argument("scenario: axis must be 0..2");
    return a;
  }
  const std::string s = j.get<std::string>();
  if (s == "x") return 0;
  if (s == "y") return 1;
  if (s == "z") return 2;
  throw std::invalid_argument("scenario: axis must be x, y or z");
}

void parse_primitive(const json& j, std::vector<Primitive>& out) {
  const std::string kind = j.at("kind").get<std::string>();
  const double inten = j.value("intensity", -1.0);
  auto with_intensity = [&](Primitive pr) {
    if (inten >= 0) pr.intensity = inten;
    if (j.contains("class")) pr.cls = parse_class(j["class"]);
    out.push_back(pr);
  };
  if (kind == "ground") {
    with_intensity(ground_plane(j.value("z", 0.0)));
  } else if (kind == "box") {
    with_intensity(make_box(parse_vec3(j.at("center"), "center"),
                            parse_vec3(j.at("half"), "half")));
  } else if (kind == "cylinder") {
    with_intensity(make_cylinder(parse_vec3(j.at("base"), "base"), j.at("radius").get<double>(),
                                 j.at("height").get<double>()));
  } else if (kind == "cone") {
    with_intensity(make_cone(parse_vec3(j.at("base"), "base"), j.at("radius").get<double>(),
                             j.at("height").get<double>()));
  } else if (kind == "rect") {
    with_intensity(make_rect(parse_vec3(j.at("center"), "center"), parse_axis(j.at("axis")),
                             j.at("half_u").get<double>(), j.at("half_v").get<double>()));
  } else if (kind == "sign") {
    auto parts =
        make_sign(parse_vec3(j.at("base"), "base"), j.at("width").get<double>(),
                  j.at("height").get<double>(), j.value("pole", 2.0),
                  j.contains("axis") ? parse_axis(j["axis"]) : 0, j.value("intensity", 0.9));
    out.insert(out.end(), parts.begin(), parts.end());
  } else {
    throw std::invalid_argument("scenario: unknown primitive kind '" + kind + "'");
  }
}

Actor parse_actor(const json& j) {
  Actor a;
  for (const json& w : j.at("waypoints")) {
    a.times.push_back(w.at("t").get<double>());
    a.wps.push_back(parse_vec3(w.at("p"), "actor waypoint"));
  }
  if (a.wps.empty()) throw std::invalid_argument("scenario: actor needs >= 1 waypoint");
  for (size_t i = 1; i < a.times.size(); ++i)
    if (a.times[i] <= a.times[i - 1])
      throw std::invalid_argument("scenario: actor waypoint times must ascend");
  for (const json& p : j.at("parts")) parse_primitive(p, a.parts);
  return a;
}

void parse_range_i(const json& j, int out[2]) {
  if (j.is_number_integer()) {
    out[0] = out[1] = j.get<int>();
    return;
  }
  if (!j.is_array() || j.size() != 2)
    throw std::invalid_argument("scenario: randomize counts must be n or [lo, hi]");
  out[0] = j[0].get<int>();
  out[1] = j[1].get<int>();
}

void parse_range_d(const json& j, double out[2]) {
  if (!j.is_array() || j.size() != 2)
    throw std::invalid_argument("scenario: randomize ranges must be [lo, hi]");
  out[0] = j[0].get<double>();
  out[1] = j[1].get<double>();
}

std::string dir_of(const std::string& path) {
  const size_t k = path.find_last_of('/');
  return k == std::string::npos ? std::string(".") : path.substr(0, k);
}

void apply_json(const json& j, Scenario& sc, RandomizeSpec& rnd, const std::string& base_dir,
                int depth) {
  if (depth > 8) throw std::invalid_argument("scenario: include chain too deep");
  if (j.contains("include")) {
    const std::string rel = j["include"].get<std::string>();
    const std::string path = base_dir + "/" + rel;
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("scenario: cannot open include '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    json base = json::parse(ss.str());
    apply_json(base, sc, rnd, dir_of(path), depth + 1);
  }

  if (j.contains("classes")) sc.C = j["classes"].get<int>();
  if (j.contains("seed")) sc.seed = j["seed"].get<uint64_t>();
  if (j.contains("key_at_m")) sc.key_at_m = j["key_at_m"].get<double>();
  if (j.contains("window_m")) sc.window_m = j["window_m"].get<double>();
  if (j.contains("extension_m")) sc.extension_m = j["extension_m"].get<double>();
  if (j.contains("target_tol")) sc.target_tol = j["target_tol"].get<double>();

  if (j.contains("camera")) {
    const json& c = j["camera"];
    if (c.contains("width")) sc.cam_w = c["width"].get<int>();
    if (c.contains("height")) sc.cam_h = c["height"].get<int>();
    if (c.contains("hfov_deg")) sc.cam_hfov = c["hfov_deg"].get<double>() * M_PI / 180.0;
  }
  if (j.contains("lidar")) {
    const json& l = j["lidar"];
    if (l.contains("beams")) sc.lidar.beams = l["beams"].get<int>();
    if (l.contains("pitch_min_deg")) sc.lidar.pitch_min = l["pitch_min_deg"].get<double>() * M_PI / 180.0;
    if (l.contains("pitch_max_deg")) sc.lidar.pitch_max = l["pitch_max_deg"].get<double>() * M_PI / 180.0;
    if (l.contains("az_step_deg")) sc.lidar.az_step = l["az_step_deg"].get<double>() * M_PI / 180.0;
    if (l.contains("max_range")) sc.lidar.max_range = l["max_range"].get<double>();
    if (l.contains("sigma")) sc.lidar.sigma = l["sigma"].get<double>();
  }
  if (j.contains("noise")) {
    const json& n = j["noise"];
    if (n.contains("jitter_px")) sc.noise.jitter_px = n["jitter_px"].get<int>();
    if (n.contains("flip_p0")) sc.noise.flip_p0 = n["flip_p0"].get<double>();
    if (n.contains("flip_p1")) sc.noise.flip_p1 = n["flip_p1"].get<double>();
    if (n.contains("flip_dmax")) sc.noise.flip_dmax = n["flip_dmax"].get<double>();
    if (n.contains("soften")) sc.noise.soften = n["soften"].get<double>();
  }
  if (j.contains("ego")) {
    const json& e = j["ego"];
    if (e.contains("waypoints")) {
      sc.ego.wps.clear();
      for (const json& w : e["waypoints"]) sc.ego.wps.push_back(parse_vec3(w, "ego waypoint"));
    }
    if (e.contains("speed")) sc.ego.speed = e["speed"].get<double>();
  }
  if (j.contains("statics"))
    for (const json& p : j["statics"]) parse_primitive(p, sc.statics);
  if (j.contains("actors"))
    for (const json& a : j["actors"]) sc.actors.push_back(parse_actor(a));

  if (j.contains("randomize")) {
    const json& r = j["randomize"];
    rnd = RandomizeSpec{};
    rnd.present = true;
    if (r.contains("cones")) parse_range_i(r["cones"], rnd.cones);
    if (r.contains("signs")) parse_range_i(r["signs"], rnd.signs);
    if (r.contains("barrels")) parse_range_i(r["barrels"], rnd.barrels);
    if (r.contains("boxes")) parse_range_i(r["boxes"], rnd.boxes);
    if (r.contains("x")) parse_range_d(r["x"], rnd.x);
    if (r.contains("y")) parse_range_d(r["y"], rnd.y);
    if (r.contains("corridor")) rnd.corridor = r["corridor"].get<double>();
  }
}

void apply_randomize(Scenario& sc, const RandomizeSpec& rnd) {
  std::mt19937_64 rng(sc.seed * 0x9e3779b97f4a7c15ULL + 0xc0ffee);
  auto count = [&](const int r[2]) {
    if (r[1] <= r[0]) return std::max(0, r[0]);
    return (int)std::uniform_int_distribution<int>(r[0], r[1])(rng);
  };
  std::uniform_real_distribution<double> ux(rnd.x[0], rnd.x[1]);
  std::uniform_real_distribution<double> uy(rnd.y[0], rnd.y[1]);
  auto place = [&]() {
    const double x = ux(rng);
    double y = uy(rng);
    for (int tries = 0; std::abs(y) < rnd.corridor && tries < 100; ++tries) y = uy(rng);
    if (std::abs(y) < rnd.corridor) y = y < 0 ? -rnd.corridor : rnd.corridor;
    return Vec3{x, y, 0};
  };
  auto u = [&](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };

  const int n_cones = count(rnd.cones), n_signs = count(rnd.signs);
  const int n_barrels = count(rnd.barrels), n_boxes = count(rnd.boxes);
  for (int i = 0; i < n_cones; ++i) {
    const Vec3 p = place();
    sc.statics.push_back(make_cone(p, u(0.18, 0.35), u(0.45, 0.8)));
  }
  for (int i = 0; i < n_signs; ++i) {
    const Vec3 p = place();
    auto parts = make_sign(p, u(0.5, 0.9), u(0.5, 0.9), u(1.5, 2.5));
    sc.statics.insert(sc.statics.end(), parts.begin(), parts.end());
  }
  for (int i = 0; i < n_barrels; ++i) {
    const Vec3 p = place();
    sc.statics.push_back(make_cylinder(p, u(0.25, 0.35), u(0.8, 1.1)));
  }
  for (int i = 0; i < n_boxes; ++i) {
    const Vec3 p = place();
    const double hx = u(0.8, 2.5), hy = u(0.8, 2.5), hz = u(0.5, 1.2);
    sc.statics.push_back(make_box({p.x, p.y, hz}, {hx, hy, hz}, kBackground, u(0.15, 0.4)));
  }
}

}  // namespace

namespace {

Scenario from_json_impl(const std::string& text, const std::string& base_dir,
                        const uint64_t* seed_override) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("scenario: bad JSON: ") + e.what());
  }
  Scenario sc;
  RandomizeSpec rnd;
  apply_json(doc, sc, rnd, base_dir.empty() ? "." : base_dir, 0);
  if (seed_override) sc.seed = *seed_override;
  if (rnd.present) apply_randomize(sc, rnd);
  return sc;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("scenario: cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

Scenario scenario_from_json(const std::string& text, const std::string& base_dir) {
  return from_json_impl(text, base_dir, nullptr);
}

Scenario scenario_from_json(const std::string& text, const std::string& base_dir,
                            uint64_t seed_override) {
  return from_json_impl(text, base_dir, &seed_override);
}

Scenario load_scenario(const std::string& path) {
  return from_json_impl(slurp(path), dir_of(path), nullptr);
}

Scenario load_scenario(const std::string& path, uint64_t seed_override) {
  return from_json_impl(slurp(path), dir_of(path), &seed_override);
}

}  // namespace stm
