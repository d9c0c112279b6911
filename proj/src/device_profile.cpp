#include "flow3d/device_profile.hpp"

namespace flow3d {

using nlohmann::json;

namespace {

std::int64_t positive_int(const json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end()) throw DeviceError(std::string("device profile is missing field '") + key + "'");
  if (!it->is_number_integer()) throw DeviceError(std::string("field '") + key + "' must be an integer");
  std::int64_t v = it->get<std::int64_t>();
  if (v <= 0) throw DeviceError(std::string("field '") + key + "' must be positive");
  return v;
}

std::optional<Rational> bandwidth(const json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end()) return Rational(kDefaultDmaWordsPerCycle);
  Rational r;
  try {
    if (it->is_string()) {
      if (it->get<std::string>() == "unlimited") return std::nullopt;
      r = Rational::parse(it->get<std::string>());
    } else if (it->is_number_integer()) {
      r = Rational(it->get<std::int64_t>());
    } else if (it->is_number()) {
      r = Rational::parse(it->dump());
    } else {
      throw DeviceError(std::string("field '") + key + "' must be a number, \"n/d\" or \"unlimited\"");
    }
  } catch (const std::invalid_argument& e) {
    throw DeviceError(std::string("field '") + key + "': " + e.what());
  }
  if (r <= Rational(0)) throw DeviceError(std::string("field '") + key + "' must be positive");
  return r;
}

ResourceVector overhead(const json& doc, const char* key, ResourceVector fallback) {
  auto it = doc.find(key);
  if (it == doc.end()) return fallback;
  if (!it->is_object()) throw DeviceError(std::string("field '") + key + "' must be an object");
  ResourceVector r;
  auto component = [&](const char* name) -> std::int64_t {
    auto c = it->find(name);
    if (c == it->end()) return 0;
    if (!c->is_number_integer() || c->get<std::int64_t>() < 0) {
      throw DeviceError(std::string(key) + "." + name + " must be a non-negative integer");
    }
    return c->get<std::int64_t>();
  };
  r.dsp = component("dsp");
  r.bram = component("bram");
  r.lut = component("lut");
  r.ff = component("ff");
  return r;
}

json bandwidth_json(const std::optional<Rational>& bw) {
  if (!bw) return "unlimited";
  if (bw->is_integer()) return bw->num();
  return bw->to_string();
}

json overhead_json(const ResourceVector& r) {
  return json{{"dsp", r.dsp}, {"bram", r.bram}, {"lut", r.lut}, {"ff", r.ff}};
}

}  // namespace

DeviceProfile DeviceProfile::with_unlimited_bandwidth() const {
  DeviceProfile copy = *this;
  copy.bw_in_words_per_cycle.reset();
  copy.bw_out_words_per_cycle.reset();
  return copy;
}

DeviceProfile profile_from_json(const json& doc) {
  if (!doc.is_object()) throw DeviceError("device profile must be a JSON object");
  DeviceProfile dev;
  auto name = doc.find("name");
  if (name == doc.end()) throw DeviceError("device profile is missing field 'name'");
  if (!name->is_string()) throw DeviceError("field 'name' must be a string");
  dev.name = name->get<std::string>();
  dev.dsp_total = positive_int(doc, "dsp_total");
  dev.bram_total = positive_int(doc, "bram_total");
  dev.lut_total = positive_int(doc, "lut_total");
  dev.ff_total = positive_int(doc, "ff_total");
  auto clock = doc.find("clock_hz");
  if (clock == doc.end()) throw DeviceError("device profile is missing field 'clock_hz'");
  if (!clock->is_number() || clock->get<double>() <= 0.0) throw DeviceError("field 'clock_hz' must be positive");
  dev.clock_hz = clock->get<double>();
  dev.bw_in_words_per_cycle = bandwidth(doc, "bw_in_words_per_cycle");
  dev.bw_out_words_per_cycle = bandwidth(doc, "bw_out_words_per_cycle");
  dev.dma_overhead = overhead(doc, "dma_overhead", kDefaultDmaOverhead);
  dev.xbar_overhead = overhead(doc, "xbar_overhead", kDefaultXbarOverhead);
  return dev;
}

DeviceProfile load_profile(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw DeviceError(std::string("device profile is not valid JSON: ") + e.what());
  }
  return profile_from_json(doc);
}

json profile_to_json(const DeviceProfile& dev) {
  json doc;
  doc["name"] = dev.name;
  doc["dsp_total"] = dev.dsp_total;
  doc["bram_total"] = dev.bram_total;
  doc["lut_total"] = dev.lut_total;
  doc["ff_total"] = dev.ff_total;
  doc["clock_hz"] = dev.clock_hz;
  doc["bw_in_words_per_cycle"] = bandwidth_json(dev.bw_in_words_per_cycle);
  doc["bw_out_words_per_cycle"] = bandwidth_json(dev.bw_out_words_per_cycle);
  doc["dma_overhead"] = overhead_json(dev.dma_overhead);
  doc["xbar_overhead"] = overhead_json(dev.xbar_overhead);
  return doc;
}

}  // namespace flow3d
