#include "eir/cli.hpp"

int main(int argc, char** argv) { return eir::cli::run(argc, argv); }
