"""Regenerate the golden prompts from the bundles with a plain string renderer.

Run from this directory: python3 render_golden.py
"""
import glob
import json

TEMPLATE = "../../templates/prompt.txt"


DESCRIPTIONS = {
    "Context Caption": "A textual description of the whole visual content, generated by the visual captioning tool.",
    "Interest Caption": "A textual description of the user's eye gaze interest, generated by a visual captioning tool -- "
    "a list of textual descriptions of the object that the user is looking at. The recognition result might be "
    "inaccurate, and the input is the top 3 descriptions with the highest confidence.",
    "OCR": "Extracted text from the whole vision field, generated by OCR tool, the recognition result can be "
    "considered highly inaccurate except for understandable phrases.",
    "User Query": "The user's query question, may be vague by using pronouns or skipping intent words. Query text is "
    "a transcript using a speech recognition tool, which may be inaccurate if you find some words hard to understand.",
}


def block(bundle, kind):
    if kind == "Context Caption":
        return "\n".join(bundle["context_captions"])
    if kind == "Interest Caption":
        return "\n".join("[" + ", ".join(labels) + "]" for labels in bundle["interest_captions"])
    if kind == "OCR":
        return bundle.get("ocr_text") or ""
    return bundle["query_text"]


def render(template, bundle):
    roster = bundle["input_roster"]
    inputs = "".join(f"\n- {k}: {DESCRIPTIONS[k]}" for k in roster)
    values = "\n\n".join(f"{k}:\n{block(bundle, k)}" for k in roster)
    head, rest = template.split("{{inputs}}")
    mid, tail = rest.split("{{values}}")
    tail = tail.replace("{{examples}}", "")
    return head + inputs + mid + values + tail


if __name__ == "__main__":
    with open(TEMPLATE, encoding="utf-8") as f:
        template = f.read()
    for path in sorted(glob.glob("*.bundle.json")):
        with open(path, encoding="utf-8") as f:
            bundle = json.load(f)
        out = path.replace(".bundle.json", ".prompt.txt")
        with open(out, "w", encoding="utf-8", newline="") as f:
            f.write(render(template, bundle))
        print(out)
