fn main() {
    // populated once the pipeline module lands
}
