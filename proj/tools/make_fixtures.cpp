// make_fixtures: regenerates the committed fixture backend and golden run.
//
//   make_fixtures <fixtures dir> <golden run dir>
//
// Runs the pipeline on <fixtures>/fixture.conf with the synthetic models
// behind a recorder, then replays the recorded responses into a fresh golden
// run so the golden manifest names the fixture backend.

#include "../tests/support/synthetic_backend.hpp"

#include "gendermine/pipeline.hpp"

#include <iostream>

namespace fs = std::filesystem;
using namespace gendermine;
using namespace gendermine::pipeline;

int main(int argc, char** argv) {
    if (argc != 3) {
        std::cerr << "usage: make_fixtures <fixtures dir> <golden run dir>\n";
        return 2;
    }
    const fs::path fixtures = argv[1];
    const fs::path golden = argv[2];
    try {
        const auto config = load_config(fixtures / "fixture.conf");
        const auto backend_dir = fixtures / "backend";
        fs::remove_all(backend_dir);
        auto recorder =
            std::make_shared<RecordingBackend>(std::make_shared<testing::SyntheticBackend>(), backend_dir);

        const auto scratch = fs::temp_directory_path() / "gendermine-make-fixtures";
        fs::remove_all(scratch);
        RunOptions record;
        record.resume = false;
        for (auto c : kCapabilities) record.backends[c] = recorder;
        run_pipeline(config, scratch, record);
        fs::remove_all(scratch);

        fs::remove_all(golden);
        RunOptions replay;
        replay.resume = false;
        run_pipeline(config, golden, replay);
        fs::remove_all(golden / "cache");
        std::size_t n = 0;
        for (const auto& e : fs::directory_iterator(backend_dir)) n += e.is_regular_file();
        std::cout << "recorded " << n << " responses; golden run in " << golden.string() << "\n";
    } catch (const std::exception& e) {
        std::cerr << "make_fixtures: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
