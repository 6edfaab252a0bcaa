#include "mobiprice/cli.hpp"

int main(int argc, char** argv) { return mobiprice::run_cli(argc, argv); }
