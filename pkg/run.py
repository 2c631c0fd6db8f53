from qaconv import create_app
import os
from dotenv import load_dotenv

load_dotenv()

app = create_app(os.getenv('QACONV_ENV', 'development'))

if __name__ == '__main__':
    app.run(
        host='0.0.0.0',
        port=app.config['PORT'],
        debug=os.getenv('FLASK_DEBUG', 'False').lower() == 'true'
    )
