// Regenerates the bundled fixtures under data/fixtures.
#include <filesystem>
#include <fstream>
#include <iostream>

#include "moevd/fixtures.hpp"

namespace fs = std::filesystem;

static void write(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
    std::cout << "wrote " << p.string() << "\n";
}

int main(int argc, char** argv) {
    const fs::path dir = argc > 1 ? argv[1] : "data/fixtures";
    fs::create_directories(dir);
    for (const auto& spec : {moevd::fixtures::separable12_spec(), moevd::fixtures::confusable4_spec()}) {
        const auto fx = moevd::fixtures::generate(spec);
        write(dir / (fx.name + ".jsonl"), fx.jsonl());
        write(dir / (fx.name + "_taxonomy.tsv"), fx.taxonomy);
    }
    return 0;
}
