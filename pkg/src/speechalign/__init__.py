"""Semi-supervised speech/text joint pre-training at desk scale.

A speech encoder pre-trained by masked frame reconstruction, a text
encoder pre-trained by token MLM, cross-modal alignment losses that pull
the two representation spaces together on paired data, and downstream
heads (sequence classification, spoken span prediction) that consume only
the speech encoder.
"""

__version__ = "0.1.0"
