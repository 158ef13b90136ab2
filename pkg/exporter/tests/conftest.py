"""Shared fixtures: a tiny local transformer and a canned chat endpoint.

Nothing here touches the network. The encoder fixture builds a miniature
BERT from a fixed seed and saves it to a session tmp dir; loading it back
through AutoModel exercises the exact code path a real checkpoint would.
"""

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

# per-class canned sense replies, shaped like the real chat contract
CANNED_SENSES = {
    "crane": [
        {"text": "crane (bird)", "sense": "bird", "visual": True},
        {"text": "crane (construction equipment)",
         "sense": "construction equipment", "visual": True},
    ],
    "bass": [
        {"text": "bass (fish)", "sense": "fish", "visual": True},
        {"text": "bass (guitar)", "sense": "guitar", "visual": True},
        {"text": "bass (low frequency sound)", "sense": "sound", "visual": False},
    ],
    "spring": [
        {"text": "spring (coil)", "sense": "coil", "visual": True},
        {"text": "spring (season)", "sense": "season", "visual": True},
    ],
    "bat": [
        {"text": "bat (animal)", "sense": "animal", "visual": True},
        {"text": "bat (sports club)", "sense": "sports club", "visual": True},
    ],
    "mouse": [
        {"text": "mouse (rodent)", "sense": "rodent", "visual": True},
        {"text": "mouse (computer device)", "sense": "computer device", "visual": True},
    ],
}


class _SenseHandler(BaseHTTPRequestHandler):
    status = 200
    raw_override = None  # when set, returned verbatim as the message content

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        payload = json.loads(self.rfile.read(length))
        user = payload["messages"][-1]["content"]
        name = ""
        if "Category name: '" in user:
            name = user.split("Category name: '", 1)[1].split("'", 1)[0]
        if self.raw_override is not None:
            content = self.raw_override
        else:
            content = json.dumps(CANNED_SENSES.get(name, []))
        body = json.dumps({"choices": [{"message": {"content": content}}]}).encode()
        self.send_response(self.status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


@pytest.fixture()
def chat_server():
    _SenseHandler.status = 200
    _SenseHandler.raw_override = None
    server = HTTPServer(("127.0.0.1", 0), _SenseHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield _SenseHandler, f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()


@pytest.fixture(autouse=True)
def api_key(monkeypatch):
    monkeypatch.setenv("MUPROCL_EXPORT_API_KEY", "test-token")


_VOCAB = [
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
    "a", "an", "the", "of", "in", "photo", "sketch", "close", "up",
    "natural", "scene", "crane", "bird", "construction", "equipment",
    "bass", "fish", "guitar", "sound", "spring", "coil", "season",
    "bat", "animal", "sports", "club", "mouse", "rodent", "computer",
    "device", "low", "frequency", "(", ")", "-", "##s", "##up",
]


@pytest.fixture(scope="session")
def tiny_encoder_dir(tmp_path_factory):
    import torch
    from transformers import BertConfig, BertModel, BertTokenizer

    root = tmp_path_factory.mktemp("tiny_encoder")
    (root / "vocab.txt").write_text("\n".join(_VOCAB) + "\n")
    tokenizer = BertTokenizer(str(root / "vocab.txt"), do_lower_case=True)
    torch.manual_seed(7)
    config = BertConfig(vocab_size=len(_VOCAB), hidden_size=16,
                        num_hidden_layers=1, num_attention_heads=2,
                        intermediate_size=32, max_position_embeddings=64)
    model = BertModel(config)
    model.eval()
    model.save_pretrained(root)
    tokenizer.save_pretrained(root)
    return str(root)
