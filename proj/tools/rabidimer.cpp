// rabidimer.cpp - command-line entry point

#include <cstdlib>
#include <unistd.h>

#include "rabidimer/cli.hpp"

namespace {

// OpenBLAS mis-detects some AVX-512 parts and selects a kernel that produces
// wrong eigenvectors; pin the core type before the library loads.
void pin_openblas_core(char** argv) {
    if (std::getenv("OPENBLAS_CORETYPE") != nullptr) return;
    if (!__builtin_cpu_supports("avx512f")) return;
    ::setenv("OPENBLAS_CORETYPE", "SkylakeX", 1);
    ::execv("/proc/self/exe", argv);
}

}  // namespace

int main(int argc, char** argv) {
    pin_openblas_core(argv);
    return rabidimer::run_cli(argc, argv);
}
