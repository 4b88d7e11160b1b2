#include "advtune/cli.hpp"

int main(int argc, char** argv) { return advtune::cli::run(argc, argv); }
