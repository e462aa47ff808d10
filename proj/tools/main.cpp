#include "rosetta/cli.hpp"

int main(int argc, char** argv) { return rosetta::cli::run(argc, argv); }
