#include "gapdiag/cli.hpp"

int main(int argc, char** argv) { return gapdiag::cli::run(argc, argv); }
