"""Human-readable dump of a backbone, embedding store or latent file."""

from app.utils.file_formats import describe_file


def main(path) -> str:
    return describe_file(path)
