// Writes every bundled model to <dir>/<name>.json.
#include <fstream>
#include <iostream>

#include "flow3d/model_zoo.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: gen_models <output-dir>\n";
    return 2;
  }
  for (const auto& name : flow3d::zoo::names()) {
    std::string path = std::string(argv[1]) + "/" + name + ".json";
    std::ofstream out(path, std::ios::binary);
    if (!out) {
      std::cerr << "cannot write " << path << "\n";
      return 1;
    }
    out << flow3d::serialize_model(flow3d::zoo::by_name(name));
  }
  return 0;
}
