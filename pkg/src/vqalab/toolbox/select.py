"""The two select tools.

These classes carry the schemas and the docstrings shown to the orchestrator;
their execution (manifest lookup, generation fallback) lives in the data
sources module, which dispatches on the tool name.
"""

from __future__ import annotations

from vqalab.toolbox.base import ArgSpec, Tool

SELECT_MODULE = "src.tools.select"


class SelectTool(Tool):
    MODULE_PATH = SELECT_MODULE


class TextToImageGeneration(SelectTool):
    """Generate an image with a class and image type.

    Args:
    ----
    class_name (str | "random"): The class name of the object to generate. If "random", the
    class name is randomly selected from the dataset.
    image_type (str): The type of image. Default to "photo".

    Examples:
    --------
    Generate an oil painting of a dog:
    >>> generate_dog = TextToImageGeneration("dog", "oil painting")
    >>> dataset = ...
    >>> sample_generation = generate_dog(sample)

    Generate a pencil sketch of a labrador:
    >>> generate_dog = TextToImageGeneration("labrador", "pencil sketch")
    >>> dataset = ...
    >>> sample_generation = generate_dog(sample)
    """

    ARGS = (
        ArgSpec("class_name", "str"),
        ArgSpec("image_type", "str", default="photo"),
    )


class TextToImageRetrieval(SelectTool):
    """Retrieve an image from a dataset with a class and an image type.

    If the class name or the image type are not defined for the dataset, retrieval is replaced
    by generation.

    Args:
    ----
    class_name (str | "random"): The class name of the object to generate. If "random", the
    class name is randomly selected from the dataset.
    image_type (str): The type of image. Default to "photo".

    Examples:
    --------
    Retrieve an image of a random class name:
    >>> retrieve_random = TextToImageRetrieval("random")
    >>> dataset = ...
    >>> sample_selection = retrieve_random(dataset)

    Retrieve an image of a siamese cat:
    >>> retrieve_cat = TextToImageRetrieval("siamese cat")
    >>> dataset = ...
    >>> sample_selection = retrieve_cat(dataset)
    """

    ARGS = (
        ArgSpec("class_name", "str"),
        ArgSpec("image_type", "str", default="photo"),
    )


SELECT_TOOLS = (TextToImageGeneration, TextToImageRetrieval)
