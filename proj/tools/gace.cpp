#include "gace/cli.hpp"

int main(int argc, char** argv) { return gace::cli::run(argc, argv); }
