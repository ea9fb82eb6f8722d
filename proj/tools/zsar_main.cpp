#include "cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return zsar::cli::run(args, zsar::cli::default_environment());
}
