// Placeholder entry point; the subcommand wiring lands with the io layer.
int main() { return 0; }
