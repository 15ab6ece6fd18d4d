#include "seil/cli.hpp"

int main(int argc, char** argv) { return seil::cli::run_command(argc, argv); }
