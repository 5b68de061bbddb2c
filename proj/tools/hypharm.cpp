#include "hypharm/cli.hpp"

int main(int argc, char** argv) { return hypharm::run_cli(argc, argv); }
