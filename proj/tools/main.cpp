#include "anisoband/cli.hpp"

int main(int argc, char** argv) { return anisoband::run_cli(argc, argv); }
