"""Table QA through LLM-generated pandas programs.

The package is organized around the run pipeline: load and profile a table
(`tables`), render the few-shot prompts (`prompting`, `exemplars`), call a
generation backend (`llm`), execute the returned program in a child process
(`sandbox`), retry on execution errors (`pipeline`), and score predictions
with the relaxed comparison rules (`evaluator`).  `cli` ties it together.
"""

__version__ = "0.1.0"
