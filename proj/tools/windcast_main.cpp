#include "windcast/cli.hpp"

int main(int argc, char** argv) { return windcast::run_cli(argc, argv); }
