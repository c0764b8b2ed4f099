// peach-synth: writes a synthetic bundle with planted class vocabularies.

#include "peach/error.hpp"
#include "peach/synthetic.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"peach-synth: generate a synthetic dataset bundle"};
    peach::SyntheticConfig config;
    std::string out;
    app.add_option("--out", out, "Output directory")->required();
    app.add_option("--n", config.n);
    app.add_option("--d", config.d);
    app.add_option("--classes", config.classes)->check(CLI::Range(2, 3));
    app.add_option("--groups", config.groups);
    app.add_option("--subclasses", config.subclasses);
    app.add_option("--separation", config.separation);
    app.add_option("--noise", config.column_noise);
    app.add_option("--test-fraction", config.test_fraction);
    app.add_option("--seed", config.seed);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }
    try {
        const auto data = peach::generate_synthetic(config);
        const auto manifest = peach::write_synthetic(data, out);
        std::cout << manifest.string() << "\n";
    } catch (const peach::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
