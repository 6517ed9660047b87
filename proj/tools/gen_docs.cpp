// Writes the preset reference and one method file per preset.

#include <filesystem>
#include <fstream>
#include <iostream>

#include "unifloral/presets/presets.hpp"

int main(int argc, char** argv) {
  namespace fs = std::filesystem;
  const fs::path out = argc > 1 ? argv[1] : "docs";
  fs::create_directories(out / "methods");
  std::ofstream md(out / "presets.md");
  md << "# Preset reference\n\n"
     << "Fixed values and sampling ranges of every registered method. Ranged entries are in bold:\n"
     << "`U[a, b]` uniform, `logU[a, b]` log-uniform, `int[a, b]` integer uniform, `{..}` choice.\n"
     << "Each method is also available as a JSON method file under `methods/`, usable with\n"
     << "`unifloral train --config-file`.\n\n"
     << unifloral::preset_cross_reference();
  for (const auto& name : unifloral::preset_names()) {
    const auto path = out / "methods" / (name + ".json");
    unifloral::save_method_file(unifloral::preset(name), path.string());
    std::cout << "wrote " << path.string() << '\n';
  }
  return md ? 0 : 1;
}
