// Regenerates the CSV fixtures under tests/fixtures. Deterministic: the
// files are committed and this tool only documents how they were made.
//   make_fixtures <dir> [--skip-long-run]
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>

#include "translock/chainsim.hpp"
#include "translock/constants.hpp"
#include "translock/io.hpp"
#include "translock/noise.hpp"

using namespace translock;

namespace {

void save(const std::filesystem::path& path, const CsvTable& table) {
    std::ofstream out(path, std::ios::binary);
    out << to_csv(table);
    std::cout << path.string() << " (" << table.rows() << " rows)\n";
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: make_fixtures <dir> [--skip-long-run]\n";
        return 2;
    }
    const std::filesystem::path dir = argv[1];
    const bool skip_long = argc > 2 && std::strcmp(argv[2], "--skip-long-run") == 0;
    std::filesystem::create_directories(dir);

    // white FM, h0 = 1e6 Hz^2/Hz at 10 kHz sampling
    NoiseSpec white;
    white.white_fm = 1e6;
    white.seed = 11;
    FrequencyTrace w = generate_noise(white, 100000, 1e-4);
    w.label = "white_fm";
    save(dir / "white_fm.csv", traces_to_csv({w}));

    NoiseSpec walk;
    walk.random_walk_fm = 1e8;
    walk.seed = 12;
    FrequencyTrace r = generate_noise(walk, 100000, 1e-4);
    r.label = "random_walk_fm";
    save(dir / "random_walk_fm.csv", traces_to_csv({r}));

    FrequencyTrace flat;
    flat.label = "constant";
    flat.sample_interval = 1e-3;
    flat.samples.assign(1000, 12345.0);
    save(dir / "constant.csv", traces_to_csv({flat}));

    // error-signal record with a 250 kHz tone, 1 MS/s
    FrequencyTrace tone;
    tone.label = "error";
    tone.unit = "V";
    tone.sample_interval = 1e-6;
    for (int i = 0; i < 65536; ++i) {
        const double t = i * 1e-6;
        tone.samples.push_back(0.1 * std::sin(constants::two_pi * 250e3 * t) + 0.01 * std::sin(constants::two_pi * 31e3 * t));
    }
    save(dir / "tone_250k.csv", traces_to_csv({tone}));

    // linear discriminator: 2.5e-7 V/Hz, offset 0.01 V, 41 points over +-2 MHz
    CsvTable gauge;
    gauge.header = {"frequency_Hz", "signal_V"};
    gauge.columns.resize(2);
    for (int i = -20; i <= 20; ++i) {
        const double f = i * 100e3;
        gauge.columns[0].push_back(f);
        gauge.columns[1].push_back(2.5e-7 * f + 0.01);
    }
    save(dir / "gauge_linear.csv", gauge);

    if (!skip_long) {
        const LongRunResult lr = long_term_run(default_chain_config(), 7200.0, 1.0);
        save(dir / "long_run.csv", traces_to_csv({lr.out_of_loop, lr.slave_offset, lr.pressure}));
    }
    return 0;
}
